"""Shared test helpers."""
import numpy as np

from echodiet.channel_sim import ActivityEntry, ActivityScript, Reflector, Scene, Static, render_scene


def static_stream(ranges_m, seconds=1.0, noise_rms=0.0, reflectivity=1.0, seed=0):
    """Microphone audio of fixed reflectors, no activity reflector."""
    scene = Scene([Reflector(Static(r), reflectivity) for r in ranges_m], noise_rms=noise_rms, seed=seed)
    script = ActivityScript([ActivityEntry(0, seconds, "null")], seconds)
    return render_scene(scene, script, include_activity=False)[0]


def brute_correlate(received, template):
    received = np.asarray(received, dtype=np.float64)
    template = np.asarray(template, dtype=np.float64)
    n = template.size
    return np.array([sum(received[l + k] * template[k] for k in range(n))
                     for l in range(received.size - n + 1)])


SCRIPT_ENTRIES = [(0, 6, "null"), (6, 9, "food_intake"), (9, 17, "chewing"), (17, 23, "drinking"),
                  (23, 31, "talking"), (31, 37, "face_touch"), (37, 40, "food_intake"),
                  (40, 48, "chewing")]


def write_inputs(root, seed):
    """Scene and script JSON for one 48 s session."""
    import json

    scene = Scene([Reflector(Static(0.06), 0.3), Reflector(Static(0.3), 0.7)], noise_rms=0.5, seed=seed)
    script = ActivityScript([ActivityEntry(a, b, lab) for a, b, lab in SCRIPT_ENTRIES], 48.0)
    root.mkdir(parents=True, exist_ok=True)
    (root / "scene.json").write_text(json.dumps(scene.to_dict()))
    (root / "script.json").write_text(json.dumps(script.to_dict()))
    return root / "scene.json", root / "script.json"


def run_pipeline(root, seed=0, epochs=2):
    """simulate -> process -> dataset -> train -> report through the CLI; returns the output dirs."""
    from echodiet.cli import main

    def ok(*argv):
        code = main([str(a) for a in argv])
        assert code == 0, argv

    sessions = []
    for group, scene_seed in (("a", 11), ("b", 22)):
        scene, script = write_inputs(root / "in" / group, scene_seed)
        sim, proc = root / "sim" / group, root / "proc" / group
        ok("--seed", seed, "simulate", scene, script, sim)
        ok("process", sim / "audio.mspc", proc)
        sessions += ["--session", group, proc / "diff.msep", sim / "truth.csv"]
    ok("dataset", root / "ds" / "data.msds", *sessions)
    ok("--seed", seed, "train", root / "ds" / "data.msds", root / "train", "--holdout", "all",
       "--epochs", epochs, "--batch-size", 32)
    ok("report", root / "train" / "predictions_a.csv", root / "sim" / "a" / "truth.csv",
       root / "report" / "episodes.json", "--segment-s", 20)
    return root


# Acceptance verdicts, printed again in the terminal summary.
ACCEPTANCE = {}
