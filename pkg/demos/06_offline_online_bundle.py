"""Persist an offline model and reload it for online work, as the command line tool does.

Run: python3 demos/06_offline_online_bundle.py
Equivalent shell session:
    lgmor offline --nx 30 --ny 30 --ncx 5 --ncy 5 --output runs/demo
    lgmor online runs/demo/bundle
    lgmor study --study beta --betas 1e-2 2e-4 5e-6 --nx 30 --ny 30 --ncx 5 --ncy 5
    lgmor bench --nx 60 --ny 60 --ncx 5 --ncy 5 --n-test 20
"""
import json
import tempfile
from pathlib import Path

from lgmor.experiments import ExperimentConfig, offline, persist, run_online

out = Path(tempfile.mkdtemp()) / "demo"
cfg = ExperimentConfig(nx=30, ny=30, ncx=5, ncy=5, L=4, n_max=5, n_train=30, n_test=5,
                       output=str(out))
off = offline(cfg)
paths = persist(off, out)
for k, v in paths.items():
    print(f"{k:17s} {v}")

manifest = json.loads((out / "bundle" / "manifest.json").read_text())
print("manifest:", {k: manifest[k] for k in ("N", "M", "L", "Q_a", "Q_u")})

solutions, mus, model = run_online(out / "bundle")
for mu, s in zip(mus, solutions):
    print(f"mu={mu[0]:.4f}  J={s.J:.6e}")
