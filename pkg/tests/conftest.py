"""Shared helpers for the test suite: small synthetic survey/census builders."""

import numpy as np
import pytest

from povmap.data import CensusDataset, SurveyDataset


def make_survey(m=5, n_i=12, p=2, beta0=7.0, slopes=(0.5, -0.3), sigma_gamma=0.2,
                sigma_eps=0.8, seed=0, weights=None):
    """Homogeneous nested-error survey with m areas of n_i units each."""
    rng = np.random.default_rng(seed)
    n = m * n_i
    area_ids = np.repeat([f"a{i:02d}" for i in range(m)], n_i)
    X = rng.normal(0.0, 1.0, (n, p))
    gam = np.repeat(rng.normal(0.0, sigma_gamma, m), n_i)
    y = beta0 + X @ np.asarray(slopes, dtype=float)[:p] + gam + rng.normal(0, sigma_eps, n)
    return SurveyDataset(
        area_ids=area_ids,
        y=y,
        welfare=np.exp(y),
        X=X,
        weights=np.ones(n) if weights is None else weights,
    )


def census_from_survey(survey, extra_rows=0, seed=1, area_aux=False):
    """Census covering the survey areas; optionally adds rows and area aux means."""
    rng = np.random.default_rng(seed)
    ids = list(survey.area_ids)
    X = [survey.X]
    if extra_rows:
        areas = survey.areas
        ids += list(rng.choice(areas, size=extra_rows))
        X.append(rng.normal(0.0, 1.0, (extra_rows, survey.p)))
    ids = np.asarray(ids)
    X = np.vstack(X)
    aux = None
    if area_aux:
        aux = {
            a: np.concatenate([[1.0], X[ids == a].mean(axis=0)])
            for a in np.unique(ids)
        }
    return CensusDataset(area_ids=ids, X=X, area_aux=aux)


@pytest.fixture
def small_survey():
    return make_survey()
