"""Exception types shared across the package."""

from __future__ import annotations


class RadarnomalyError(Exception):
    """Base class for all package-specific errors."""


class MalformedLine(RadarnomalyError):
    """A wire-format line could not be parsed as a plot record."""


class SchemaViolation(RadarnomalyError):
    """Data or model state does not conform to the feature schema."""


class InvalidConfig(RadarnomalyError):
    """A configuration object fails its own validity rules."""


class TrackTooShort(RadarnomalyError):
    """An operation needs more plots than the track holds."""


class ShapeMismatch(RadarnomalyError):
    """An array argument has the wrong dimensions."""


class EmptySequence(RadarnomalyError):
    """An aggregate was requested over zero elements."""


class IndexOutOfRange(RadarnomalyError):
    """A categorical value or lookup index exceeds its declared range."""


class InsufficientData(RadarnomalyError):
    """Not enough plots, tracks or windows to train or calibrate."""


class NonFiniteLoss(RadarnomalyError):
    """Training produced NaN or infinite loss."""


class UntrainedModel(RadarnomalyError):
    """A model was asked to score or calibrate before being trained."""


class UnknownFeature(RadarnomalyError):
    """A feature name is not declared in the schema."""


class UnknownSession(RadarnomalyError):
    """A session id is not present in the corpus."""


class OneClassOnly(RadarnomalyError):
    """A ranking metric needs both positive and negative examples."""


class NoPositives(RadarnomalyError):
    """Average precision needs at least one positive example."""


class CardinalityOne(RadarnomalyError):
    """A manipulation target feature has no alternative value to pick."""


class SingleSession(RadarnomalyError):
    """A cross-session or transfer split needs at least two sessions."""
