# app/__init__.py
# bme-spot: boosted model ensembling for temporal event spotting.
# Greedy weighted ensembles of per-frame score sources, tuned on mAP@tolerance.
