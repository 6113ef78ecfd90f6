#!/usr/bin/env python3
"""
Environment verification for spikefront.
Checks the interpreter, packages, numerics, project files and the run
registry location before a first run.
"""

import importlib
import os
import sqlite3
import sys
from pathlib import Path
from typing import Callable, List, Tuple

Check = Tuple[bool, str]

PACKAGES = [
    ("pydantic", "pydantic"),
    ("pydantic_settings", "pydantic-settings"),
    ("dotenv", "python-dotenv"),
    ("aiosqlite", "aiosqlite"),
    ("numpy", "numpy"),
    ("scipy", "scipy"),
    ("torch", "torch"),
    ("torchaudio", "torchaudio"),
    ("pytest", "pytest"),
]

SOURCES = [
    "main.py", "models.py", "settings.py", "audio_io.py", "datasets.py",
    "training.py", "gradcheck.py", "evaluation.py", "serialization.py",
    "database.py", "orchestrator.py",
]
COMPONENTS = ["__init__", "frontend", "fbank", "surrogate", "neurons", "classifier", "pipeline"]


def python_version() -> Check:
    v = sys.version_info
    label = f"Python {v.major}.{v.minor}.{v.micro}"
    if v >= (3, 9):
        return True, f"✓ {label}"
    return False, f"✗ {label} (3.9+ required)"


def package(module_name: str, dist_name: str) -> Check:
    try:
        mod = importlib.import_module(module_name)
    except ImportError:
        return False, f"✗ {dist_name} (not installed)"
    return True, f"✓ {dist_name} ({getattr(mod, '__version__', 'unknown')})"


def double_precision_conv() -> Check:
    """The oracles compare float64 convolutions to 1e-9"""
    try:
        import torch
        x = torch.ones(1, 1, 8, dtype=torch.float64)
        torch.nn.functional.conv1d(x, torch.ones(1, 1, 3, dtype=torch.float64), padding=1)
    except Exception as e:
        return False, f"✗ float64 conv1d failed: {e}"
    return True, f"✓ float64 conv1d ({torch.get_num_threads()} threads available)"


def deterministic_kernels() -> Check:
    try:
        import torch
        torch.use_deterministic_algorithms(True)
        torch.use_deterministic_algorithms(False)
    except Exception as e:
        return False, f"✗ deterministic algorithms unavailable: {e}"
    return True, "✓ deterministic algorithms (--threads 1 runs are bit-reproducible)"


def mel_transform() -> Check:
    try:
        import torchaudio
        torchaudio.transforms.MelSpectrogram(sample_rate=16000, n_fft=400, hop_length=160, n_mels=40)
    except Exception as e:
        return False, f"✗ torchaudio MelSpectrogram failed: {e}"
    return True, "✓ torchaudio MelSpectrogram (fbank baseline)"


def registry_location() -> Check:
    """The registry path from SPIKEFRONT_DATABASE_PATH must be creatable"""
    path = Path(os.getenv("SPIKEFRONT_DATABASE_PATH", "./spikefront_runs.db"))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        sqlite3.connect(path).close()
    except (OSError, sqlite3.Error) as e:
        return False, f"✗ run registry {path}: {e}"
    return True, f"✓ run registry {path}"


def project_files() -> List[Check]:
    paths = SOURCES + [f"components/{name}.py" for name in COMPONENTS] + ["requirements.txt"]
    return [
        (True, f"✓ {p}") if Path(p).exists() else (False, f"✗ {p} (missing)")
        for p in paths
    ]


def report(title: str, checks: List[Check]) -> bool:
    print(f"{title}:")
    for _, message in checks:
        print(f"  {message}")
    print()
    return all(ok for ok, _ in checks)


def main() -> int:
    rule = "=" * 70
    print(rule)
    print("  spikefront - Environment Check")
    print(rule)
    print()

    ok = report("Python", [python_version()])
    packages_ok = report("Packages", [package(m, d) for m, d in PACKAGES])
    ok = ok and packages_ok

    # Numeric checks import torch; skip them when packages are missing
    if packages_ok:
        numerics: List[Callable[[], Check]] = [double_precision_conv, deterministic_kernels, mel_transform]
        ok = report("Numerics", [check() for check in numerics]) and ok

    ok = report("Project Files", project_files()) and ok
    ok = report("Run Registry", [registry_location()]) and ok

    if not Path(".env").exists():
        print("Note: no .env file, built-in defaults apply (cp .env.example .env)")
        print()

    print(rule)
    if ok:
        print("✅ Ready. Next steps:")
        print("  python main.py gradcheck --seed 0")
        print("  python main.py train --seed 0 --out runs/demo")
    else:
        print("⚠️  Some checks failed; resolve the items marked ✗ above.")
        print("  pip install -r requirements.txt")
    print(rule)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
