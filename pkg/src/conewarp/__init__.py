"""conewarp: certified warped-product metrics with nonnegative Ricci curvature
on resolutions of quotient singularities, asymptotic to metric cones."""

__version__ = "0.1.0"
