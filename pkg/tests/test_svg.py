from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from midclass.frontier import beta_map, zero_frontier
from midclass.svg import Chart, beta_triangle, dot_whisker, share_scatter
from midclass.regression import ols


def test_chart_is_valid_xml_and_deterministic():
    ch = Chart(title="t & <x>").scatter([1, 2, 3], [3, 1, 2]).line([1, 3], [1, 3], label="fit")
    a, b = ch.render(), ch.render()
    assert a == b
    root = ET.fromstring(a)
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}circle")) == 3


def test_nan_points_skipped():
    svg = Chart().scatter([1, np.nan, 3], [1, 2, 3]).render()
    assert svg.count("<circle") == 2


def test_no_negative_zero():
    svg = Chart(xlim=(-1, 1), ylim=(-1, 1)).scatter([0.0], [-0.0]).render()
    assert "-0.00" not in svg


def test_domain_plots(pareto_sample):
    y = pareto_sample.interval_shares(20, 21)
    ET.fromstring(share_scatter(pareto_sample.gini, y, 20, 21, ols(y, pareto_sample.gini)).render())
    surf = beta_map(pareto_sample, "external", grid_step=10)
    ET.fromstring(beta_triangle(surf, zero_frontier(surf)).render())
    svg = dot_whisker(["a", "b", "c"], [1.0, 0.5, -0.2], [0.5, 0.1, -0.6], [1.5, 0.9, 0.2], separator_after=2).render()
    assert 'stroke-dasharray="4,3"' in svg
