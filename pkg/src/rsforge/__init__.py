"""Geography-guided corpus sampling and small-scale contrastive pretraining."""

__version__ = "0.1.0"
