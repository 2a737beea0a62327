from hardylab.task_servers.task_server import HookManager, TaskServer, TaskWorker
