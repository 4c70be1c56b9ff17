from acvbench.ops.commands import Command, is_mutating, parse_command, render
from acvbench.ops.gateway import ActionResult, Gateway
from acvbench.ops.script import CodeBlock, execute_script, extract_blocks, format_results, split_bash

__all__ = [
    "ActionResult",
    "CodeBlock",
    "Command",
    "Gateway",
    "execute_script",
    "extract_blocks",
    "format_results",
    "is_mutating",
    "parse_command",
    "render",
    "split_bash",
]
