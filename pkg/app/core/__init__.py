# app/core/__init__.py
# Core pipeline: score algebra, metric, suppression, ensemble search,
# sample construction, synthetic benchmarks and file formats.
