"""How the bulk parameter theta trades mesh count against mesh size.

Small theta refines few elements per step (many cheap meshes, close to the
optimal grading); theta = 1 refines every element with a nonzero indicator
and behaves like uniform refinement.  Uses the command-line driver so the
output directories can be fed to ``hdgcontrol compare`` afterwards.

    python3 demos/bulk_parameter.py [--problem example2] [--out demo_out/theta]
"""
import argparse
from pathlib import Path

from hdgcontrol import loglog_slope
from hdgcontrol.cli import RunConfig, compare, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--problem", default="example2")
    ap.add_argument("--budget", type=int, default=10_000)
    ap.add_argument("--out", default="demo_out/theta")
    args = ap.parse_args()
    out = Path(args.out)

    dirs = {}
    for theta in (0.2, 0.4, 0.6, 1.0):
        d = out / f"theta{theta:g}"
        cfg = RunConfig(problem=args.problem, k=1, theta=theta, budget=args.budget,
                        out=str(d), emit=("csv", "svg"), solver="direct")
        rec = run(cfg).records
        n = [r.n_dofs for r in rec]
        print(f"theta={theta:<4g} meshes={len(rec):3d} final N={n[-1]:6d} "
              f"eta={rec[-1].eta:.3e} slope={loglog_slope(n, [r.eta for r in rec], last=4):.3f}")
        dirs[theta] = d

    merged = compare(dirs[0.2], dirs[1.0], out / "compare")
    print(f"merged {len(merged)} rows; see {out / 'compare' / 'compare.svg'}")


if __name__ == "__main__":
    main()
