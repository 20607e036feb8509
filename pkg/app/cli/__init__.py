# app/cli/__init__.py
# Command-line layer. Thin click wrappers over app.core.
