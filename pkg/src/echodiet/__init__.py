"""Active ultrasonic sensing of fine-grained dietary actions.

Pipeline: chirp synthesis and scene simulation (:mod:`channel_sim`), echo
profiles (:mod:`signal_core`), labeled windows (:mod:`dataset`), a window
classifier (:mod:`classifier`), metrics and episode analytics.
"""
__version__ = "0.1.0"
