"""scikit-learn style wrapper around :func:`stutterbisim.equiv.reduce`.

The fit is loose: the "training data" is a single system, ``fit`` learns its
partition into equivalence classes, ``transform`` maps that system to its
quotient and ``predict`` maps state ids to quotient states.

>>> from stutterbisim.generate import tau_sequence
>>> est = BisimulationReducer(equivalence="branching").fit(tau_sequence(3))
>>> est.n_classes_
4
>>> est.predict([0, 1, 2]).tolist()
[0, 1, 1]
"""

from __future__ import annotations

from typing import Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .equiv import (Engine, Equivalence, EquivalenceMismatch, InvalidStateError,
                    kripke_quotient, lts_quotient, reduce)
from .model import KripkeStructure, Lts, read_system

SystemLike = Union[KripkeStructure, Lts, bytes, str]


def check_system(X: SystemLike) -> Union[KripkeStructure, Lts]:
    """Return ``X`` as a system object; ``.aut`` or Kripke text is parsed."""
    if isinstance(X, (KripkeStructure, Lts)):
        return X
    if isinstance(X, (bytes, str)):
        return read_system(X)
    raise TypeError(f"expected a KripkeStructure, Lts or its text, got {type(X).__name__}")


def check_state_ids(states, n_states: int) -> np.ndarray:
    """Validate a 1-d sequence of state ids against ``n_states``."""
    ids = np.asarray(states)
    if ids.ndim == 0:
        ids = ids.reshape(1)
    if ids.ndim != 1:
        raise ValueError(f"expected a 1-d array of state ids, got shape {ids.shape}")
    if ids.size and not np.issubdtype(ids.dtype, np.integer):
        raise TypeError(f"state ids must be integers, got dtype {ids.dtype}")
    ids = ids.astype(np.int64, copy=False)
    bad = (ids < 0) | (ids >= n_states)
    if bad.any():
        raise InvalidStateError(f"state id {int(ids[bad][0])} out of range 0..{n_states - 1}")
    return ids


class BisimulationReducer(TransformerMixin, BaseEstimator):
    """Minimize a Kripke structure or LTS modulo a stuttering-type equivalence.

    Parameters
    ----------
    equivalence : {"dbs", "stuttering", "branching", "branching-divergence"}
    engine : {"fast", "naive"}
    naive_cap : int or None
        State cap for the naive engine; ``None`` uses the environment default.
    debug : bool
        Recount all bookkeeping of the fast engine after every operation.
    """

    def __init__(self, equivalence="branching", engine="fast", naive_cap=None, debug=False):
        self.equivalence = equivalence
        self.engine = engine
        self.naive_cap = naive_cap
        self.debug = debug

    def fit(self, X: SystemLike, y=None):
        system = check_system(X)
        eq = Equivalence.parse(self.equivalence)
        result = reduce(system, eq, Engine(self.engine), self.naive_cap, self.debug)
        self.classes_ = result.classes
        self.quotient_ = result.quotient
        self.stats_ = result.stats
        self.n_classes_ = result.n_classes
        self.n_states_in_ = system.n_states
        self.system_kind_ = type(system)
        reps = sorted(set(result.classes.class_of))
        index = {r: i for i, r in enumerate(reps)}
        self.labels_ = np.array([index[c] for c in result.classes.class_of], dtype=np.int64)
        return self

    def transform(self, X: SystemLike):
        """Quotient of ``X`` under the fitted partition; ``X`` must be the fitted system."""
        check_is_fitted(self, "classes_")
        system = check_system(X)
        if not isinstance(system, self.system_kind_):
            raise EquivalenceMismatch(f"fitted on {self.system_kind_.__name__}, got {type(system).__name__}")
        if system.n_states != self.n_states_in_:
            raise ValueError(f"fitted on {self.n_states_in_} states, got {system.n_states}")
        if isinstance(system, Lts):
            eq = Equivalence.parse(self.equivalence)
            return lts_quotient(system, self.classes_, eq is Equivalence.BRANCHING_DIVERGENCE)
        return kripke_quotient(system, self.classes_)

    def fit_transform(self, X: SystemLike, y=None, **fit_params):
        return self.fit(X).quotient_

    def predict(self, states) -> np.ndarray:
        """Quotient state id of each given original state."""
        check_is_fitted(self, "classes_")
        ids = check_state_ids(states, self.n_states_in_)
        return self.labels_[ids]
