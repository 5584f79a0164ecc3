"""Budgeted target-node crawling with learned frontier predictors."""

__version__ = "0.1.0"
