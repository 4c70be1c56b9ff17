"""Names of the tool functions agents import inside their python blocks.

Agent code is interpreted, never imported, so these stubs only document the
signatures. The runtime binds the real implementations per agent.
"""


def query_prometheus(promQL: str, **kwargs) -> list:
    """Evaluate ``promQL`` over ``duration`` (or ``start_time``/``end_time``) at ``step`` resolution."""
    raise RuntimeError("query_prometheus is only available inside an agent code block")


def report_result(component: str, message: str, message_type: str) -> str:
    """Send ``message`` ('ISSUE' or 'RESPONSE') from ``component`` to the manager."""
    raise RuntimeError("report_result is only available inside an agent code block")


def assign_tasks(components: list, messages: list) -> str:
    """Manager only: send one TASK per component."""
    raise RuntimeError("assign_tasks is only available inside a manager code block")
