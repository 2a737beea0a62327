from hardylab.reporters.base_reporter import BaseReporter
from hardylab.reporters.json_reporter import JSONReporter
from hardylab.reporters.csv_reporter import CSVReporter
from hardylab.reporters.default_reporter import DefaultReporter
from hardylab.reporters.console_reporter import ConsoleReporter
