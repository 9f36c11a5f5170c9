"""``aicl`` command line: check, convert, run, replay, diff and rules.

Exit status: 0 clean, 1 findings or differences, 2 malformed input,
3 I/O, configuration or usage error. Reports go to stdout, tool
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import trace as tr
from .binary import PRESETS, DecodeError, FieldMask, MaskError
from .core.diagnostics import RULES, Diagnostic, Severity, render_registry
from .harness import (
    BUILTIN_NAMES,
    FaultTargetError,
    ScenarioError,
    ScenarioFormatError,
    builtin_source,
    execute,
    inject_faults,
    load_scenario,
    parse_fault,
)
from .text import ParseError, PrintStyle, print_stream
from .validate import check_trace

EXIT_OK, EXIT_FINDINGS, EXIT_MALFORMED, EXIT_USAGE = 0, 1, 2, 3
CONFIG_FILE = "aicl.yaml"


class UsageError(Exception):
    """Bad flags, configuration or file access; exits 3."""


class MalformedInput(Exception):
    """Input that does not parse or decode; exits 2."""


# -- configuration ------------------------------------------------------------


@dataclass
class Settings:
    rules: dict = field(default_factory=dict)  # rule id -> Severity | None
    mask: list = field(default_factory=list)  # mask spec items
    severity_floor: Severity = Severity.ERROR
    key: Optional[bytes] = None


def _read_yaml(path: Path) -> dict:
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: invalid YAML: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a mapping")
    return doc


def parse_rules(doc: object, source: str) -> dict:
    """``{RULE.ID: error|warning|info|off}`` -> overrides."""
    if not isinstance(doc, dict):
        raise UsageError(f"{source}: rules must be a mapping of rule id to severity")
    out = {}
    for rule, sev in doc.items():
        if rule not in RULES:
            raise UsageError(f"{source}: unknown rule {rule!r}")
        if sev is False or str(sev).lower() in ("off", "none", "disabled"):
            out[rule] = None
            continue
        try:
            out[rule] = Severity.parse(str(sev))
        except ValueError as exc:
            raise UsageError(f"{source}: {exc}") from None
    return out


def _rules_file(path: str) -> dict:
    doc = _read_yaml(Path(path))
    return parse_rules(doc.get("rules", doc), path)


def _severity(text: str, source: str) -> Severity:
    try:
        return Severity.parse(text)
    except ValueError as exc:
        raise UsageError(f"{source}: {exc}") from None


def _split_mask(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def load_settings(args: argparse.Namespace, env: Optional[dict] = None, cwd: Optional[Path] = None) -> Settings:
    """Defaults < ./aicl.yaml < environment < command-line flags."""
    env = os.environ if env is None else env
    s = Settings()
    cfg_path = (cwd or Path.cwd()) / CONFIG_FILE
    if cfg_path.is_file():
        cfg = _read_yaml(cfg_path)
        if "rules" in cfg:
            s.rules.update(parse_rules(cfg["rules"], str(cfg_path)))
        if "mask" in cfg:
            items = cfg["mask"]
            s.mask = _split_mask(items) if isinstance(items, str) else [str(i) for i in items]
        if "severity_floor" in cfg:
            s.severity_floor = _severity(str(cfg["severity_floor"]), str(cfg_path))
        if "key" in cfg:
            s.key = _hex_key(str(cfg["key"]), str(cfg_path))
    if env.get("AICL_RULES"):
        s.rules.update(_rules_file(env["AICL_RULES"]))
    if env.get("AICL_MASK"):
        s.mask = _split_mask(env["AICL_MASK"])
    if env.get("AICL_SEVERITY_FLOOR"):
        s.severity_floor = _severity(env["AICL_SEVERITY_FLOOR"], "AICL_SEVERITY_FLOOR")
    if getattr(args, "rules_config", None):
        s.rules.update(_rules_file(args.rules_config))
    if getattr(args, "mask", None):
        s.mask = [item for spec in args.mask for item in _split_mask(spec)]
    if getattr(args, "severity_floor", None):
        s.severity_floor = _severity(args.severity_floor, "--severity-floor")
    if getattr(args, "key", None):
        s.key = _hex_key(args.key, "--key")
    return s


def _hex_key(text: str, source: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise UsageError(f"{source}: key must be hex") from None


def build_mask(items: Sequence[str], base: FieldMask) -> FieldMask:
    """Mask items: ``path``, ``path~band`` or ``@preset``. They add to
    ``base`` unless ``@none`` appears, which starts from an empty mask."""
    mask = PRESETS["none"] if "@none" in items else base
    for item in items:
        try:
            if item.startswith("@"):
                name = item[1:]
                if name not in PRESETS:
                    raise UsageError(f"unknown mask preset {item!r} (have {', '.join('@' + p for p in PRESETS)})")
                preset = PRESETS[name]
                mask = mask.union(preset.excluded, dict(preset.tolerances))
            elif "~" in item:
                path, band = item.split("~", 1)
                mask = mask.union(tolerances={path: float(band)})
            else:
                mask = mask.union([item])
        except MaskError as exc:
            raise UsageError(str(exc)) from None
        except ValueError:
            raise UsageError(f"bad tolerance in mask item {item!r}") from None
    return mask


# -- input --------------------------------------------------------------------


def _load_trace(path: str) -> tr.TraceLog:
    try:
        return tr.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except (ParseError, DecodeError) as exc:
        raise MalformedInput(f"{path}: {exc}") from None
    except UnicodeDecodeError:
        raise MalformedInput(f"{path}: not UTF-8 text and not an .aiclb file") from None


def _save_trace(log: tr.TraceLog, path: str) -> None:
    try:
        if path == "-":
            sys.stdout.write(print_stream(log.messages()))
        else:
            tr.save(log, path)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _out(lines: Sequence[str]) -> None:
    for line in lines:
        print(line)


# -- commands -----------------------------------------------------------------


def _format_diag(path: str, d: Diagnostic, porcelain: bool) -> str:
    index = "-" if d.index is None else str(d.index)
    if porcelain:
        return "\t".join((path, index, d.severity.value, d.rule, d.path or "-", d.detail))
    return f"{path}:{d}"


def cmd_check(args: argparse.Namespace, s: Settings) -> int:
    failing = 0
    counts = {sev: 0 for sev in Severity}
    for path in args.files:
        log = _load_trace(path)
        diags = check_trace(log.messages(), s.rules, key=s.key)
        for d in diags:
            counts[d.severity] += 1
        failing += sum(d.severity.rank >= s.severity_floor.rank for d in diags)
        _out([_format_diag(path, d, args.porcelain) for d in diags])
    if not args.porcelain:
        print(f"{sum(counts.values())} finding(s): {counts[Severity.ERROR]} error, "
              f"{counts[Severity.WARNING]} warning, {counts[Severity.INFO]} info")
    return EXIT_FINDINGS if failing else EXIT_OK


CONVERT_TARGETS = ("text", "binary", "canonical-text")


def cmd_convert(args: argparse.Namespace, s: Settings) -> int:
    log = _load_trace(args.input)
    to = args.to or ("binary" if args.output.endswith(".aiclb") else "canonical-text")
    msgs = log.messages()
    if to == "binary":
        data = tr.to_bytes(log)
    else:
        style = PrintStyle.PRETTY if to == "text" else PrintStyle.COMPACT
        data = print_stream(msgs, style).encode("utf-8")
    try:
        if args.output == "-":
            sys.stdout.flush()
            sys.stdout.buffer.write(data)
            sys.stdout.buffer.flush()
        else:
            tr.write_atomic(args.output, data)
    except OSError as exc:
        raise UsageError(f"cannot write {args.output}: {exc.strerror}") from None
    return EXIT_OK


def _scenario(ref: str):
    p = Path(ref)
    try:
        if p.is_file():
            return load_scenario(p)
        if ref in BUILTIN_NAMES:
            return load_scenario(builtin_source(ref))
    except ScenarioFormatError as exc:
        raise MalformedInput(f"{ref}: {exc}") from None
    raise UsageError(f"no scenario file or builtin named {ref!r} (builtins: {', '.join(BUILTIN_NAMES)})")


def parse_fault_spec(spec: str):
    """``kind[:k=v,...]`` with keys seq, step, mtype, nth, path, value, key, ctx."""
    kind, _, rest = spec.partition(":")
    raw: dict = {"kind": kind}
    for part in filter(None, rest.split(",")):
        k, eq, v = part.partition("=")
        if not eq:
            raise UsageError(f"fault option {part!r} is not key=value")
        raw[k] = int(v) if k in ("seq", "step", "nth") and v.lstrip("-").isdigit() else v
    try:
        return parse_fault(raw, f"--fault {spec}")
    except ScenarioFormatError as exc:
        raise UsageError(str(exc)) from None


def cmd_run(args: argparse.Namespace, s: Settings) -> int:
    sc = _scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    try:
        if args.fault:
            sc = inject_faults(sc, [parse_fault_spec(f) for f in args.fault])
        run = execute(sc)
    except FaultTargetError as exc:
        raise UsageError(str(exc)) from None
    except (ScenarioError, ScenarioFormatError) as exc:
        raise MalformedInput(f"{args.scenario}: {exc}") from None
    for inj in run.injections:
        where = "-" if inj.locus is None else f"#{inj.locus}"
        expect = inj.expected_rule or "-"
        print(f"injected {inj.fault.kind.value} at emitted #{inj.target_seq} -> trace {where} expect {expect}",
              file=sys.stderr)
    _save_trace(run.trace, args.output or f"{sc.name}.aiclb")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace, s: Settings) -> int:
    log = _load_trace(args.trace)
    if args.adapter is not None and args.stub is not None:
        raise UsageError("--stub and --adapter are mutually exclusive")
    if args.adapter is not None:
        if args.adapter not in tr.ADAPTERS:
            raise UsageError(f"no responder adapter named {args.adapter!r} (have {', '.join(sorted(tr.ADAPTERS))})")
        responder = tr.ADAPTERS[args.adapter](log)
    else:
        source = log if args.stub in (None, "") else _load_trace(args.stub)
        responder = tr.StubFromTrace(source)
    mask = build_mask(s.mask, tr.REPLAY_MASK)
    report = tr.replay(log, responder, mask)
    _out(tr.format_replay(report, args.porcelain))
    return EXIT_OK if report.ok else EXIT_FINDINGS


def cmd_diff(args: argparse.Namespace, s: Settings) -> int:
    left, right = _load_trace(args.left), _load_trace(args.right)
    mask = build_mask(s.mask, tr.DIFF_MASK)
    entries = tr.diff_traces(left, right, mask)
    _out(tr.format_diff(entries, args.porcelain))
    if not args.porcelain:
        n = sum(len(d) for _, d in entries)
        print(f"{n} difference(s) in {len(entries)} message(s)")
    return EXIT_FINDINGS if entries else EXIT_OK


def cmd_rules(args: argparse.Namespace, s: Settings) -> int:
    sys.stdout.write(render_registry())
    return EXIT_OK


# -- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default; usage errors are 3 here
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aicl", description="Check, convert, run, replay and diff AICL traces.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp: argparse.ArgumentParser, mask: bool = False) -> None:
        sp.add_argument("--porcelain", action="store_true", help="tab-separated output without summary lines")
        sp.add_argument("--rules-config", metavar="FILE", help="YAML rule severity overrides")
        sp.add_argument("--severity-floor", metavar="SEV",
                        help="lowest severity that makes the exit status 1 (default: error)")
        if mask:
            sp.add_argument("--mask", action="append", metavar="SPEC",
                            help="field path, path~tolerance or @preset; repeatable, comma-separated")

    c = sub.add_parser("check", help="validate traces and report findings")
    c.add_argument("files", nargs="+", metavar="TRACE")
    c.add_argument("--key", metavar="HEX", help="HMAC key; verify signed messages")
    common(c)
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("convert", help="convert between text and .aiclb")
    v.add_argument("input")
    v.add_argument("output", help="output file, or '-' for stdout")
    v.add_argument("--to", choices=CONVERT_TARGETS,
                   help="text (pretty), binary (.aiclb) or canonical-text (compact); "
                        "default: binary for a .aiclb output, canonical-text otherwise")
    v.set_defaults(func=cmd_convert)

    r = sub.add_parser("run", help="run a scenario file or builtin and write its trace")
    r.add_argument("scenario", help=f"scenario YAML path or one of: {', '.join(BUILTIN_NAMES)}")
    r.add_argument("-o", "--output", help="trace file; .aiclb is binary, other suffixes text, '-' text on stdout "
                                          "(default: <scenario name>.aiclb)")
    r.add_argument("--seed", type=int)
    r.add_argument("--fault", action="append", metavar="KIND[:K=V,...]",
                   help="inject a fault: drop, duplicate, mutate, cross-ctx-recall, dangling-of")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("replay", help="replay requests against a responder and compare answers")
    rp.add_argument("trace")
    rp.add_argument("--stub", nargs="?", const="", metavar="FILE",
                    help="answer from recorded responses (of FILE, default the trace itself)")
    rp.add_argument("--adapter", metavar="NAME", help=f"named responder: {', '.join(sorted(tr.ADAPTERS))}")
    common(rp, mask=True)
    rp.set_defaults(func=cmd_replay)

    d = sub.add_parser("diff", help="structural diff of two traces under a field mask")
    d.add_argument("left")
    d.add_argument("right")
    common(d, mask=True)
    d.set_defaults(func=cmd_diff)

    ru = sub.add_parser("rules", help="print the rule registry")
    ru.set_defaults(func=cmd_rules)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return int(exc.code or 0)
    try:
        settings = load_settings(args)
        return args.func(args, settings)
    except UsageError as exc:
        print(f"aicl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MalformedInput as exc:
        print(f"aicl: malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
