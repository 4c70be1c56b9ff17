"""Exception hierarchy shared across the testbed."""


class AcvError(Exception):
    """Base class for all testbed errors."""


# cluster

class ClusterError(AcvError):
    pass


class NotFound(ClusterError):
    pass


class DuplicateDeployment(ClusterError):
    pass


class InvalidSpec(ClusterError):
    pass


class ReplicaBoundExceeded(ClusterError):
    pass


class FaultAlreadyActive(ClusterError):
    pass


class ManifestError(ClusterError):
    pass


# metrics

class MetricsError(AcvError):
    pass


class QuerySyntaxError(MetricsError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnsupportedFunction(MetricsError):
    pass


class UnknownMetric(MetricsError):
    pass


class NonMonotonicTick(MetricsError):
    pass


class CounterRegression(MetricsError):
    pass


# ops dsl

class CommandError(AcvError):
    pass


class UnknownVerb(CommandError):
    pass


class BadFlag(CommandError):
    pass


class UnsupportedCommand(CommandError):
    pass


class ForbiddenConstruct(CommandError):
    pass


class PlaceholderDetected(CommandError):
    pass


# message bus

class BusError(AcvError):
    pass


class DuplicateQueue(BusError):
    pass


class NoSuchQueue(BusError):
    pass


class InvalidType(BusError):
    pass


class LengthMismatch(BusError):
    pass


class UnknownComponent(BusError):
    pass


# agents

class AgentError(AcvError):
    pass


class BudgetExhausted(AgentError):
    def __init__(self, transcript):
        super().__init__(f"step budget exhausted after {transcript.steps} steps")
        self.transcript = transcript


class BackendUnavailable(AgentError):
    pass


class RulesParseError(AgentError):
    pass


class RoundBudgetExhausted(AgentError):
    def __init__(self, outcome):
        super().__init__(f"round budget exhausted after {outcome.rounds} rounds")
        self.outcome = outcome


# harness

class HarnessError(AcvError):
    pass


class CatalogCorrupt(HarnessError):
    pass


class EnvironmentSetupFailed(HarnessError):
    pass


class InsufficientHistory(HarnessError):
    pass


class CorruptLog(HarnessError):
    pass
