"""Exception hierarchy shared by all rankgauntlet modules."""


class RankGauntletError(Exception):
    """Base class for all library errors."""


class MalformedMatrix(RankGauntletError):
    """A matrix claimed to be a permutation matrix is not one-hot per row/column."""


class DimensionMismatch(RankGauntletError):
    """Inputs disagree on layer id, edge count, or vector length."""


class AllZeroTrust(RankGauntletError):
    """Weighted voting received a trust vector that sums to zero."""


class InvalidSparsity(RankGauntletError):
    """Sparsity k must satisfy 0 < k <= 100."""


class InvalidArchitecture(RankGauntletError):
    """Layer size list is empty, too short, or contains non-positive sizes."""


class EmptyDataset(RankGauntletError):
    """Operation requires at least one sample."""


class InvalidZeta(RankGauntletError):
    """Stealth parameter zeta must lie in (0, 1]."""


class NoMaliciousClients(RankGauntletError):
    """Estimation requires at least one adversary-controlled ranking."""


class NoHistory(RankGauntletError):
    """Historical estimation needs a previous round; fall back to the alternative method."""


class EmptyRange(RankGauntletError):
    """The vulnerable range contains no edges."""


class EmptyTrueSet(RankGauntletError):
    """Estimation accuracy is undefined for an empty ground-truth set."""


class EmptyInput(RankGauntletError):
    """Optimizer invoked without any vulnerable matrices."""


class NumericOverflow(RankGauntletError):
    """Non-finite values where finite ones are required (log-domain paths avoid this)."""


class MissingKnowledge(RankGauntletError):
    """Update-aware attack invoked without the benign score vectors it requires."""


class TooFewClients(RankGauntletError):
    """Defense cannot run with this few clients."""


class MissingRootData(RankGauntletError):
    """Server-side defense requires a root/validation dataset."""


class TooFewSamples(RankGauntletError):
    """Partitioning would leave some shard empty."""


class ConfigError(RankGauntletError):
    """Experiment configuration is malformed, incomplete, or contains unknown keys."""
