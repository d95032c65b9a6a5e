"""Desk-scale numerics for lacunary discrete maximal operators attached to integral forms."""

from __future__ import annotations

from .arith import BudgetExceeded
from .forms import CutoffPsi, IntegralForm, UNIT_PSI, parse_form_config

__version__ = "0.1.0"
