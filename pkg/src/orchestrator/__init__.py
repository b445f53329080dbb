from src.orchestrator.router import COMMANDS, CommandRouter
from src.orchestrator.workflow import LabWorkflow, report_run

__all__ = ["COMMANDS", "CommandRouter", "LabWorkflow", "report_run"]
