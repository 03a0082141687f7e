"""Command-line interface.

Subcommands cover canonicalization of single files, synthetic dataset
generation, training, the three audits, probability curves, and a
self-verification suite.  All outputs are byte-deterministic given
identical inputs and flags.  Exit codes: 0 success, 1 usage error,
2 data error, 3 degenerate-input hard failure, 4 selftest failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import audit as _audit
from . import formats as _formats
from .cloud import (DegenerateCloudError, SimilarityMapping,
                    canonicalize_similarity, eig3_sym)
from .groups import (check_group_axioms, equivariant_average, equivariant_canon,
                     finite_orbit_canonicalize, invariant_wrap,
                     quarter_turn_group, symmetric_group)
from .image import (GrayImage, SCHEMES, canonical_angle, canonicalize_image,
                    gaussian_blur, mean_gradient, rotate_image, smooth_model)
from .vectors import MeanShiftMapping, SortMapping, sort_canonicalize, sort_energy

_F17 = "{:.17g}".format

_MODE_NAMES = {"plain": "plain", "ra": "random_augment", "adv": "adversarial",
               "mixed": "mixed", "adv-alp": "adversarial_alp",
               "adv-kl": "adversarial_kl"}
_CANON_NAMES = {"off": "off", "train": "train_and_test", "test": "test_only"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit, so run() owns codes."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="orbitcanon",
                     description="Orbit canonicalization and robustness audits.")
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")

    p = sub.add_parser("canon-image", help="canonicalize one PGM image")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--scheme", choices=SCHEMES, default="bilinear")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--report", default=None)

    p = sub.add_parser("canon-cloud", help="canonicalize one XYZ/OFF cloud")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--frame", default=None)

    p = sub.add_parser("gen-data", help="generate a synthetic labeled dataset")
    p.add_argument("--kind", choices=("images", "clouds"), required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--per-class", type=int, default=12)
    p.add_argument("--out", dest="outdir", required=True)

    p = sub.add_parser("train", help="train the linear softmax classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=sorted(_MODE_NAMES), default="plain")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--canon", choices=sorted(_CANON_NAMES), default="off")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--scheme", choices=SCHEMES, default="bilinear")
    p.add_argument("--sigma", type=float, default=1.0)

    for name, extra in (("audit-rot2d", True), ("audit-rot3d", False),
                        ("audit-scale", False)):
        p = sub.add_parser(name, help=f"run the {name.split('-')[1]} audit")
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", dest="outfile", required=True)
        if extra:
            p.add_argument("--scheme", choices=SCHEMES, default="bilinear")

    p = sub.add_parser("curve", help="true-class probability vs rotation angle")
    p.add_argument("--model", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--label", type=int, default=None)
    p.add_argument("--scheme", choices=SCHEMES, default="bilinear")

    sub.add_parser("selftest", help="run the built-in invariant suite")
    return parser


def _read_cloud_file(path: Path) -> np.ndarray:
    text = path.read_text()
    if path.suffix.lower() == ".off":
        return _formats.read_off(text)
    return _formats.read_xyz(text)


def _cmd_canon_image(args) -> int:
    if not (args.sigma > 0.0):
        raise _UsageError(f"--sigma must be positive, got {args.sigma}")
    img = _formats.read_pgm(Path(args.infile).read_bytes())
    res = canonicalize_image(img, scheme=args.scheme, sigma=args.sigma)
    Path(args.outfile).write_bytes(_formats.write_pgm(res.canonical))
    if args.report:
        lines = [
            "# orbitcanon canon-image v1",
            f"# scheme={args.scheme}",
            f"# sigma={_F17(args.sigma)}",
            "alpha_radians,gradient_magnitude,degenerate",
            f"{_F17(res.element)},{_F17(res.energy)},"
            f"{'true' if res.degenerate else 'false'}",
        ]
        Path(args.report).write_text("\n".join(lines) + "\n")
    return 0


def _cmd_canon_cloud(args) -> int:
    X = _read_cloud_file(Path(args.infile))
    canonical, frame = canonicalize_similarity(X)
    Path(args.outfile).write_text(_formats.write_xyz(canonical))
    if args.frame:
        rows = [
            "# orbitcanon canon-cloud frame v1",
            f"# degenerate={'true' if frame.degenerate else 'false'}",
            "field,x,y,z",
            "centroid," + ",".join(_F17(v) for v in frame.centroid),
            "scale," + _F17(frame.scale) + ",,",
            "signs," + ",".join(_F17(v) for v in frame.signs),
            "singular_values," + ",".join(_F17(v) for v in frame.singular_values),
        ]
        for i in range(3):
            rows.append(f"basis_row{i}," + ",".join(_F17(v) for v in frame.basis[i]))
        Path(args.frame).write_text("\n".join(rows) + "\n")
    return 0


def _cmd_gen_data(args) -> int:
    if args.per_class < 1:
        raise _UsageError("--per-class must be >= 1")
    if args.kind == "images":
        data = _audit.gen_synthetic_images(args.seed, n_per_class=args.per_class)
    else:
        data = _audit.gen_synthetic_clouds(args.seed, n_per_class=args.per_class)
    _formats.save_dataset(data, args.outdir)
    return 0


def _cmd_train(args) -> int:
    if not (args.sigma > 0.0):
        raise _UsageError(f"--sigma must be positive, got {args.sigma}")
    try:
        cfg = _audit.TrainConfig(
            mode=_MODE_NAMES[args.mode], k=args.k, lam=args.lam,
            epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch,
            weight_decay=args.weight_decay, seed=args.seed,
            canonicalize=_CANON_NAMES[args.canon], scheme=args.scheme,
            sigma=args.sigma)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    data = _formats.load_dataset(args.data)
    model = _audit.train_classifier(data, cfg)
    Path(args.model).write_bytes(_formats.save_model(model))
    return 0


def _cmd_audit(args, which: str) -> int:
    model = _formats.load_model(Path(args.model).read_bytes())
    data = _formats.load_dataset(args.data)
    if which == "rot2d":
        report = _audit.evaluate_rotation_sweep_2d(model, data, scheme=args.scheme)
    elif which == "rot3d":
        report = _audit.evaluate_rotation_grid_3d(model, data)
    else:
        report = _audit.evaluate_scale_sweep(model, data)
    Path(args.outfile).write_text(_formats.write_report(report.document()))
    return 0


def _cmd_curve(args) -> int:
    model = _formats.load_model(Path(args.model).read_bytes())
    path = Path(args.sample)
    if model.kind == "image":
        datum = _formats.read_pgm(path.read_bytes())
    else:
        datum = _read_cloud_file(path)
    if args.label is None:
        # Default to the model's prediction on the untransformed sample.
        canon = _audit._default_canonicalizer(model.kind, model.scheme, model.sigma)
        probe = canon(datum) if model.canonicalize != "off" else datum
        label = int(model.predict(_audit._featurize(model.kind, probe)[None, :])[0])
    else:
        label = args.label
    if model.kind == "image":
        angles = np.radians(np.arange(360.0))
    else:
        angles = 2.0 * np.pi * np.arange(16) / 16.0
    probs = _audit.softmax_curve(model, (datum, label), angles, scheme=args.scheme)
    lines = ["# orbitcanon curve v1",
             f"# kind={model.kind}",
             f"# label={label}",
             f"# scheme={args.scheme}",
             "index,angle_degrees,probability"]
    for i, p in enumerate(probs):
        deg = math.degrees(float(angles[i]))
        lines.append(f"{i},{_F17(deg)},{_F17(float(p))}")
    Path(args.outfile).write_text("\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# selftest


def _selftest_checks():
    """Yield (name, callable) pairs; each callable asserts one invariant."""
    rng = np.random.default_rng(20240817)

    def groups_axioms():
        check_group_axioms(quarter_turn_group(), [rng.random((4, 4))])
        check_group_axioms(symmetric_group(3), [rng.random(3)])

    def sort_oracle():
        import itertools
        for _ in range(200):
            x = np.round(rng.normal(size=4), 3)
            best = max((tuple(x[list(p)]) for p in
                        itertools.permutations(range(4))),
                       key=lambda v: (sort_energy(np.array(v)), v))
            got = sort_canonicalize(x).canonical
            assert tuple(got) == best, (x, got, best)

    def shift_invariance():
        from .vectors import mean_subtract
        for _ in range(100):
            x = rng.normal(size=8)
            a, _ = mean_subtract(x)
            b, _ = mean_subtract(x + rng.normal())
            assert np.allclose(a, b, atol=1e-12)

    def eig_reconstruction():
        for _ in range(100):
            A = rng.normal(size=(3, 3))
            C = A + A.T
            w, V = eig3_sym(C)
            assert np.linalg.norm(V @ np.diag(w) @ V.T - C) < 1e-9
            assert w[0] >= w[1] >= w[2]

    def cloud_invariance():
        for _ in range(20):
            X = rng.normal(size=(32, 3)) * np.array([1.5, 1.0, 0.6])
            c0, _ = canonicalize_similarity(X)
            theta = rng.uniform(0, 2 * np.pi)
            R = _audit.rotation_about(int(rng.integers(3)), theta)
            Y = rng.uniform(0.5, 2.0) * (X @ R) + rng.normal(size=3)
            c1, _ = canonicalize_similarity(Y)
            assert np.abs(c0 - c1).max() < 1e-8

    def rotation_identity():
        img = GrayImage(rng.random((12, 12)))
        for scheme in SCHEMES:
            assert np.array_equal(rotate_image(img, 0.0, scheme).pixels,
                                  img.pixels)
        q = rotate_image(img, math.pi / 2, "nearest")
        assert np.array_equal(q.pixels, np.rot90(img.pixels, 1))

    def angle_consistency():
        data = _audit.gen_synthetic_images(seed=12, n_per_class=1)
        img = data.samples[0][0]
        a0, _ = canonical_angle(mean_gradient(smooth_model(img, 1.0)))
        for deg in (30, 120, 250):
            beta = math.radians(deg)
            rot = rotate_image(img, beta, "bilinear")
            a, _ = canonical_angle(mean_gradient(smooth_model(rot, 1.0)))
            diff = (a - (a0 - beta) + math.pi) % (2 * math.pi) - math.pi
            assert abs(diff) < math.radians(2.0), (deg, diff)

    def equivariance():
        grid = np.round(rng.random((8, 8)) * 256) / 256
        mask = np.round(rng.random((8, 8)) * 16) / 16

        def inner(a):
            return np.asarray(a) * mask

        g4 = quarter_turn_group()
        left = equivariant_average(np.rot90(grid, 1), g4, inner)
        right = np.rot90(equivariant_average(grid, g4, inner), 1)
        assert np.array_equal(left, right)

        mapping = SimilarityMapping()
        X = rng.normal(size=(24, 3)) * np.array([1.4, 1.0, 0.7])
        A = rng.normal(size=(3, 3))

        def inner3(c):
            return np.asarray(c) @ A

        R = _audit.rotation_about(2, 0.7)
        left3 = equivariant_canon(X @ R, mapping, inner3)
        right3 = equivariant_canon(X, mapping, inner3) @ R
        assert np.abs(left3 - right3).max() < 1e-8

    def roundtrips():
        img = GrayImage(rng.random((9, 7)))
        back = _formats.read_pgm(_formats.write_pgm(img, maxval=65535))
        assert np.abs(back.pixels - img.pixels).max() < 1e-4
        X = rng.normal(size=(10, 3))
        assert np.array_equal(_formats.read_xyz(_formats.write_xyz(X)), X)
        model = _audit.LinearSoftmaxModel(
            weights=rng.normal(size=(3, 5)), bias=rng.normal(size=3),
            kind="cloud", canonicalize="train_and_test")
        loaded = _formats.load_model(_formats.save_model(model))
        assert np.array_equal(loaded.weights, model.weights)
        assert np.array_equal(loaded.bias, model.bias)
        assert loaded.canonicalize == model.canonicalize

    def wrapped_invariance():
        mapping = SortMapping()
        f = invariant_wrap(mapping, lambda v: float(np.sum(v * np.arange(len(v)))))
        x = rng.normal(size=5)
        p = rng.permutation(5)
        assert f(x) == f(x[p])
        res = finite_orbit_canonicalize(x, symmetric_group(5),
                                        energy=sort_energy)
        assert np.allclose(res.canonical, sort_canonicalize(x).canonical)
        shift = MeanShiftMapping()
        g = invariant_wrap(shift, lambda v: float(v @ v))
        assert abs(g(x) - g(x + 3.25)) < 1e-9

    return [
        ("group axioms (C4, S3)", groups_axioms),
        ("sort canonicalization matches brute force", sort_oracle),
        ("mean subtraction is shift invariant", shift_invariance),
        ("jacobi eigendecomposition reconstructs", eig_reconstruction),
        ("cloud canonicalization is similarity invariant", cloud_invariance),
        ("zero rotation is the identity; quarter turn is rot90", rotation_identity),
        ("canonical angle tracks rotations", angle_consistency),
        ("group averaging and canonicalizer conjugation are equivariant",
         equivariance),
        ("file formats round-trip", roundtrips),
        ("invariant wrappers are invariant", wrapped_invariance),
    ]


def _cmd_selftest() -> int:
    failures = 0
    for name, check in _selftest_checks():
        try:
            check()
        except Exception as exc:  # noqa: BLE001 - report and keep going
            failures += 1
            print(f"FAIL {name}: {exc}", file=sys.stderr)
        else:
            print(f"ok   {name}")
    if failures:
        print(f"{failures} selftest check(s) failed", file=sys.stderr)
        return 4
    print("all selftest checks passed")
    return 0


def run(argv=None) -> int:
    """Parse argv and execute one subcommand, returning the exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand is None:
            parser.print_usage(sys.stderr)
            return 1
        if args.subcommand == "selftest":
            return _cmd_selftest()
        handler = {
            "canon-image": _cmd_canon_image,
            "canon-cloud": _cmd_canon_cloud,
            "gen-data": _cmd_gen_data,
            "train": _cmd_train,
            "curve": _cmd_curve,
        }.get(args.subcommand)
        if handler is not None:
            return handler(args)
        return _cmd_audit(args, args.subcommand.split("-")[1])
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 2
    except DegenerateCloudError as exc:
        print(f"error: degenerate input: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
