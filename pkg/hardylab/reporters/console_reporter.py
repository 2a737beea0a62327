"""
ConsoleReporter

Colour-coded progress on the console: a banner per scenario, one line per
task with its headline value, and a summary at the end of the run.
"""

import logging

from colorama import Fore, Style, init

from hardylab.reporters.base_reporter import BaseReporter

logger = logging.getLogger("hardylab")


class ConsoleReporter(BaseReporter):
    def __init__(self):
        init()
        self.task_count = 0
        self.converged_count = 0
        self.unconverged_count = 0
        self.error_count = 0
        logger.debug("ConsoleReporter initialized")

    def _write(self, message):
        print(message, flush=True)

    def on_run_start(self, correlation_id: str, scenario=None, task_count=0, **kwargs):
        self._write(f"\n{Fore.CYAN}{'=' * 60}")
        self._write(f"{Fore.CYAN}Scenario: {Style.BRIGHT}{scenario}{Style.RESET_ALL}{Fore.CYAN} ({task_count} task(s))")
        self._write(f"{Fore.CYAN}{'=' * 60}{Style.RESET_ALL}\n")

    def on_task_start(self, correlation_id: str, label: str, **kwargs):
        self.task_count += 1
        self._write(f"{Fore.YELLOW}> Running: {Style.BRIGHT}{label}{Style.RESET_ALL}")

    def on_task_converged(self, correlation_id: str, label: str, outcome: dict, **kwargs):
        self.converged_count += 1
        value = outcome.get("value")
        shown = f"{value:.10g}" if isinstance(value, float) else value
        self._write(f"{Fore.GREEN}  Converged: {Style.BRIGHT}{label}{Style.RESET_ALL}{Fore.GREEN} value={shown}{Style.RESET_ALL}")

    def on_task_unconverged(self, correlation_id: str, label: str, outcome: dict, **kwargs):
        self.unconverged_count += 1
        self._write(f"{Fore.MAGENTA}  Unconverged: {Style.BRIGHT}{label}{Style.RESET_ALL}"
                    f"{Fore.MAGENTA} best value={outcome.get('value')}{Style.RESET_ALL}")

    def on_task_error(self, correlation_id: str, label: str, category: str, error: str, **kwargs):
        self.error_count += 1
        self._write(f"{Fore.RED}  Error: {Style.BRIGHT}{label}{Style.RESET_ALL}")
        self._write(f"{Fore.RED}   {category}: {error}{Style.RESET_ALL}")

    def on_task_end(self, correlation_id: str, label: str, elapsed: float = 0.0, **kwargs):
        self._write(f"{Style.DIM}  {label} took {elapsed:.2f}s{Style.RESET_ALL}")

    def on_study_result(self, correlation_id: str, study: dict, **kwargs):
        self._write(f"{Fore.CYAN}Study of {Style.BRIGHT}{study['task']}{Style.RESET_ALL}")
        for row in study["rows"]:
            self._write(f"  n={row['resolution']:>7}  value={row['value']:.10g}")
        extrapolation = study["extrapolation"]
        self._write(f"  {Fore.GREEN}limit={extrapolation['limit']:.10g} ({extrapolation['model']}){Style.RESET_ALL}")

    def on_run_end(self, correlation_id: str, exit_code=0, **kwargs):
        self._write(f"\n{Fore.CYAN}{'=' * 60}{Style.RESET_ALL}")
        self._write(f"\n{Style.BRIGHT}Summary:{Style.RESET_ALL}")
        self._write(f"  Tasks: {self.task_count}")
        self._write(f"  {Fore.GREEN}Converged: {self.converged_count}{Style.RESET_ALL}")
        self._write(f"  {Fore.MAGENTA}Unconverged: {self.unconverged_count}{Style.RESET_ALL}")
        self._write(f"  {Fore.RED}Errors: {self.error_count}{Style.RESET_ALL}")
        colour = Fore.GREEN if exit_code == 0 else Fore.RED
        self._write(f"\n{colour}{Style.BRIGHT}Exit code {exit_code}{Style.RESET_ALL}")
