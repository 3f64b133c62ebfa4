"""
libredense command line.

    libredense check-free --symbolic --words "1 2, 2 1"
    libredense check-free --group sym:3 --perms "(1 2),(1 3)" --bound 6
    libredense construct prod1 --word "1 2 -1 -2"
    libredense construct prod2 --profile fixtures/profile_small.txt --n 2 --bound 3
    libredense construct dense-family --visible 2,3 --bound 3 --box "0:(1 2)"
    libredense construct perturb --tuple-file prod2.json --override "0,5=2 1" --bound 3
    libredense construct extend --words "1, 2, 3" --k 6
    libredense sample dixon --group sym:10 --n 2 --bound 6 --samples 1000
    libredense demo density --config fixtures/density_free.env
    libredense embed f2 --count 6

Exit status: 0 on success, 1 when a verification fails (a witness is found,
a density trial fails, a construction does not verify), 2 on usage errors.
"""
import json
import sys
from pathlib import Path
from typing import Annotated, Optional, Sequence

import click
import typer

from errors import ConfigError, LibreDenseError, PermutationError, WordError
from freeword import ReducedWord, f2_embed, format_word, parse_word, parse_words
from freetop import countable_extension
from harness import (
    ExperimentConfig,
    GroupSpec,
    decode_tuple,
    density_demo,
    dixon_sample,
    load_profile,
    read_config_values,
    save_outputs,
)
from logger import audit_logger
from oracle import l_free_check, l_free_naive
from perm import FinPerm, SuppPerm, evaluate_word, parse_perm
from product import (
    PlantedFamily,
    ProductBox,
    ProductElement,
    box_membership,
    dense_witnesses,
    prod1_witness,
    prod2_family,
    prod4_perturb,
    prod_main_family,
)
from stallings import build_graph, graph_rank, is_free_basis

app = typer.Typer(add_completion=False, help="Dense free subgroups: constructions and freeness checks.")
construct_app = typer.Typer(add_completion=False)
sample_app = typer.Typer(add_completion=False)
demo_app = typer.Typer(add_completion=False)
embed_app = typer.Typer(add_completion=False)
app.add_typer(construct_app, name="construct")
app.add_typer(sample_app, name="sample")
app.add_typer(demo_app, name="demo")
app.add_typer(embed_app, name="embed")


@app.callback()
def main(verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Log audit events to the console.")] = False):
    if verbose:
        audit_logger.set_level("INFO")


@construct_app.callback()
def construct():
    """Build free tuples and write them as JSON."""


@sample_app.callback()
def sample():
    """Sampling experiments."""


@demo_app.callback()
def demo():
    """Density demonstrations."""


@embed_app.callback()
def embed():
    """Standard embeddings of free groups."""


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------

def split_top_level(text: str) -> list[str]:
    """Splits on commas that are not inside parentheses."""
    parts, depth, current = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    parts.append("".join(current).strip())
    return [p for p in parts if p]


def parsed(option: str, parse, *args):
    """Calls a text parser, turning malformed input into a usage error on the option."""
    try:
        return parse(*args)
    except (WordError, PermutationError) as e:
        raise click.BadParameter(str(e), param_hint=option) from None


def parse_perm_tuple(group: GroupSpec, text: str) -> tuple[FinPerm | SuppPerm, ...]:
    tokens = split_top_level(text)
    if group.kind == "sym":
        return tuple(parsed("--perms", parse_perm, tok, group.degree) for tok in tokens)  # type: ignore[misc]
    if group.kind == "supp":
        out = []
        for tok in tokens:
            p = parsed("--perms", parse_perm, tok)
            out.append(p.to_supp() if isinstance(p, FinPerm) else p)
        return tuple(out)
    raise click.UsageError(f"--perms works with sym:<m> or supp:<B>, not {group.kind}")


def parse_box(profile, text: str) -> ProductBox:
    """"<coord>:<perm>;<coord>:<perm>" with perms in cycle or one-line notation."""
    mapping = {}
    for part in (p for p in text.split(";") if p.strip()):
        coord, sep, perm = part.partition(":")
        if not sep:
            raise click.UsageError(f"box entry '{part}' must read <coordinate>:<perm>")
        c = coordinate_index(profile, coord, "--box")
        mapping[c] = parsed("--box", parse_perm, perm, profile.degrees[c])
    return ProductBox.of(profile, mapping)


def parse_override(text: str) -> tuple[tuple[int, int], str]:
    """"<element>,<coordinate>=<perm>"."""
    key, sep, perm = text.partition("=")
    if not sep or key.count(",") != 1:
        raise click.UsageError(f"override '{text}' must read <element>,<coordinate>=<perm>")
    try:
        k, c = (int(x) for x in key.split(","))
    except ValueError:
        raise click.BadParameter(f"'{key}' must be two integers", param_hint="--override") from None
    return (k, c), perm


def coordinate_index(profile, text: str, option: str) -> int:
    try:
        c = int(text)
    except ValueError:
        raise click.BadParameter(f"coordinate '{text.strip()}' is not an integer", param_hint=option) from None
    if not 0 <= c < profile.size:
        raise click.BadParameter(f"coordinate {c} is outside 0..{profile.size - 1}", param_hint=option)
    return c


def emit(payload: dict, output: Optional[Path]):
    text = json.dumps(payload, indent=2)
    if output:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(text + "\n")
    typer.echo(text)


def experiment_config(kind: str, config: Optional[Path], **flags) -> ExperimentConfig:
    values: dict = {}
    if config is not None:
        values = read_config_values(config)
    values["kind"] = kind
    for key, value in flags.items():
        if value is not None:
            values[key] = value
    return ExperimentConfig.from_mapping({k: v for k, v in values.items() if v is not None})


OutputOpt = Annotated[Optional[Path], typer.Option("--output", "-o", help="Also write the JSON here.")]
BoundOpt = Annotated[int, typer.Option("--bound", "-L", help="Word length bound.")]


# ---------------------------------------------------------------------------
# check-free
# ---------------------------------------------------------------------------

@app.command("check-free")
def check_free(
    symbolic: Annotated[bool, typer.Option("--symbolic", help="Words in a free group, decided by folding.")] = False,
    words: Annotated[Optional[str], typer.Option("--words", help='Comma-separated words, e.g. "1 2, 2 1".')] = None,
    group: Annotated[Optional[str], typer.Option("--group", help="sym:<m>, supp:<B> or product:<profile>.")] = None,
    perms: Annotated[Optional[str], typer.Option("--perms", help='Comma-separated permutations, e.g. "(1 2),(1 3)".')] = None,
    tuple_file: Annotated[Optional[Path], typer.Option("--tuple-file", help="JSON tuple written by construct.")] = None,
    bound: BoundOpt = 6,
    naive: Annotated[bool, typer.Option("--naive", help="Use the unpruned oracle.")] = False,
    output: OutputOpt = None,
) -> int:
    """Is the tuple free (symbolic) or free up to the word bound (groups)?"""
    if symbolic:
        if not words:
            raise click.UsageError("--symbolic needs --words")
        tuple_words = parsed("--words", parse_words, words)
        free = is_free_basis(tuple_words)
        payload = {
            "method": "stallings",
            "words": [format_word(w) for w in tuple_words],
            "free": free,
            "graph_rank": graph_rank(build_graph(tuple_words)),
        }
        emit(payload, output)
        return 0 if free else 1

    if group is None:
        raise click.UsageError("give --symbolic --words or --group with --perms/--tuple-file")
    spec = GroupSpec.parse(group)
    if tuple_file is not None:
        data = json.loads(tuple_file.read_text())
        elements = decode_tuple(spec, data["elements"], data.get("rank"), bound)
    elif perms is not None:
        elements = parse_perm_tuple(spec, perms)
    else:
        raise click.UsageError("--group needs --perms or --tuple-file")
    oracle = l_free_naive if naive else l_free_check
    verdict = oracle(elements, bound)
    emit({"method": oracle.__name__, "group": str(spec), **verdict.to_json()}, output)
    return 0 if verdict.free else 1


# ---------------------------------------------------------------------------
# construct
# ---------------------------------------------------------------------------

@construct_app.command("prod1")
def construct_prod1(
    word: Annotated[str, typer.Option("--word", help='A nontrivial word, e.g. "1 2 -1".')],
    rank: Annotated[Optional[int], typer.Option("--rank")] = None,
    layout: Annotated[str, typer.Option("--layout", help="compact or regular.")] = "compact",
    output: OutputOpt = None,
) -> int:
    """Permutations on which one word is not the identity."""
    w = parsed("--word", parse_word, word, rank)
    degree, witness = prod1_witness(w, layout)
    value = evaluate_word(w, witness)
    emit({
        "word": format_word(w),
        "layout": layout,
        "degree": degree,
        "perms": [str(p) for p in witness],
        "value": str(value),
        "verified": not value.is_identity(),
    }, output)
    return 0 if not value.is_identity() else 1


@construct_app.command("prod2")
def construct_prod2(
    profile: Annotated[str, typer.Option("--profile", help="Profile file, reserve=<k>:<degrees> or visible=<degrees>.")],
    n: Annotated[int, typer.Option("--n", help="Tuple size.")] = 2,
    bound: BoundOpt = 3,
    verify: Annotated[bool, typer.Option("--verify/--no-verify")] = True,
    output: OutputOpt = None,
) -> int:
    """n product elements planted to be free up to the bound."""
    degree_profile = load_profile(profile, bound)
    family = prod2_family(degree_profile, n, bound)
    verdict = l_free_check(family.elements, bound) if verify else None
    emit({
        "profile": degree_profile.describe(),
        "bound": bound,
        "elements": [e.to_json() for e in family],
        "plantings": [{"word": format_word(w), "coordinate": c} for w, c in family.plantings],
        "verification": verdict.to_json() if verdict else None,
    }, output)
    return 0 if verdict is None or verdict.free else 1


@construct_app.command("dense-family")
def construct_dense_family(
    bound: BoundOpt = 3,
    visible: Annotated[Optional[str], typer.Option("--visible", help="Visible degrees, e.g. 2,3,4.")] = None,
    profile: Annotated[Optional[str], typer.Option("--profile")] = None,
    box: Annotated[Optional[list[str]], typer.Option("--box", help='One per tuple entry, e.g. "0:(1 2);1:(1 2 3)".')] = None,
    output: OutputOpt = None,
) -> int:
    """The dense family over the visible coordinates, and members inside given boxes."""
    if (visible is None) == (profile is None):
        raise click.UsageError("give exactly one of --visible and --profile")
    degree_profile = load_profile(f"visible={visible}" if visible else profile, bound)
    family = prod_main_family(degree_profile, bound)
    boxes = [parse_box(degree_profile, b) for b in (box or [])]
    members = dense_witnesses(family, boxes) if boxes else ()
    inside = all(box_membership(e, b) for e, b in zip(members, boxes))
    verdict = l_free_check(members, bound) if members else None
    emit({
        "profile": degree_profile.describe(),
        "bound": bound,
        "family_size": len(family),
        "blocks": len(family.blocks),
        "members": [e.to_json() for e in members],
        "in_boxes": inside,
        "verification": verdict.to_json() if verdict else None,
    }, output)
    return 0 if inside and (verdict is None or verdict.free) else 1


@construct_app.command("perturb")
def construct_perturb(
    tuple_file: Annotated[Path, typer.Option("--tuple-file", help="JSON written by construct prod2.")],
    override: Annotated[list[str], typer.Option("--override", help='"<element>,<coordinate>=<perm>", repeatable.')],
    bound: BoundOpt = 3,
    verify: Annotated[bool, typer.Option("--verify/--no-verify")] = True,
    output: OutputOpt = None,
) -> int:
    """Overrides coordinates of a planted tuple and reports freeness stability."""
    data = json.loads(tuple_file.read_text())
    profile = load_profile(data["profile"], data.get("bound", bound))
    elements = tuple(ProductElement.from_json(e, profile) for e in data["elements"])
    rank = len(elements)
    plantings = tuple((parse_word(p["word"], rank), int(p["coordinate"])) for p in data.get("plantings", []))
    family = PlantedFamily(elements, plantings, int(data.get("bound", 0)))
    overrides = {}
    for text in override:
        (k, c), perm = parse_override(text)
        c = coordinate_index(profile, str(c), "--override")
        overrides[(k, c)] = parsed("--override", parse_perm, perm, profile.degrees[c])
    perturbed, report = prod4_perturb(family, overrides, bound)
    verdict = l_free_check(perturbed.elements, bound) if verify else None
    emit({
        "elements": [e.to_json() for e in perturbed],
        "stability": report.to_json(),
        "verification": verdict.to_json() if verdict else None,
    }, output)
    if report.guaranteed and verdict is not None and not verdict.free:
        return 1
    return 0


@construct_app.command("extend")
def construct_extend(
    words: Annotated[str, typer.Option("--words", help="A free basis, at least three words.")],
    k: Annotated[int, typer.Option("--k", help="How many words to put in <g_(n+1), g_(n+2)>.")] = 2,
    output: OutputOpt = None,
) -> int:
    """Countable extension of a free tuple."""
    extended = countable_extension(parsed("--words", parse_words, words), k)
    free = is_free_basis(extended)
    emit({"words": [format_word(w) for w in extended], "free": free}, output)
    return 0 if free else 1


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

ConfigOpt = Annotated[Optional[Path], typer.Option("--config", help="key=value experiment file.")]
GroupOpt = Annotated[Optional[str], typer.Option("--group")]
SizeOpt = Annotated[Optional[int], typer.Option("--n", help="Tuple size.")]
ExpBoundOpt = Annotated[Optional[int], typer.Option("--bound", "-L")]
SamplesOpt = Annotated[Optional[int], typer.Option("--samples")]
SeedOpt = Annotated[Optional[int], typer.Option("--seed")]
ReportOpt = Annotated[Optional[str], typer.Option("--output", "-o", help="JSON Lines report path.")]
CsvOpt = Annotated[Optional[str], typer.Option("--csv", help="CSV summary path.")]
WorkersOpt = Annotated[Optional[int], typer.Option("--workers")]
TimeoutOpt = Annotated[Optional[float], typer.Option("--timeout", help="Seconds per trial.")]
TimingsOpt = Annotated[Optional[bool], typer.Option("--record-timings/--no-record-timings")]
ProgressOpt = Annotated[bool, typer.Option("--progress/--no-progress")]


def _summary(report) -> dict:
    aggregate = report.aggregate()
    return {k: aggregate[k] for k in ("sample_count", "free_count", "success_count", "fraction", "fraction_float")}


@sample_app.command("dixon")
def sample_dixon(config: ConfigOpt = None, group: GroupOpt = None, n: SizeOpt = None,
                 bound: ExpBoundOpt = None, samples: SamplesOpt = None, seed: SeedOpt = None,
                 output: ReportOpt = None, csv: CsvOpt = None, workers: WorkersOpt = None,
                 timeout: TimeoutOpt = None, record_timings: TimingsOpt = None,
                 progress: ProgressOpt = False) -> int:
    """Fraction of uniformly random tuples that are free up to the bound."""
    cfg = experiment_config("dixon-sample", config, group=group, tuple_size=n, word_bound=bound,
                            sample_count=samples, seed=seed, output=output, csv=csv,
                            workers=workers, timeout=timeout, record_timings=record_timings)
    report = dixon_sample(cfg, progress)
    save_outputs(report)
    typer.echo(json.dumps(_summary(report), indent=2))
    return 0


@demo_app.command("density")
def demo_density(config: ConfigOpt = None, group: GroupOpt = None, n: SizeOpt = None,
                 bound: ExpBoundOpt = None, samples: SamplesOpt = None, seed: SeedOpt = None,
                 output: ReportOpt = None, csv: CsvOpt = None, workers: WorkersOpt = None,
                 timeout: TimeoutOpt = None, record_timings: TimingsOpt = None,
                 attempts: Annotated[Optional[int], typer.Option("--attempts")] = None,
                 progress: ProgressOpt = False) -> int:
    """Random open boxes, a free tuple constructed inside each, verified."""
    cfg = experiment_config("density-demo", config, group=group, tuple_size=n, word_bound=bound,
                            sample_count=samples, seed=seed, output=output, csv=csv,
                            workers=workers, timeout=timeout, record_timings=record_timings,
                            attempts=attempts)
    report = density_demo(cfg, progress)
    save_outputs(report)
    typer.echo(json.dumps(_summary(report), indent=2))
    return 0 if report.all_succeeded else 1


@embed_app.command("f2")
def embed_f2(count: Annotated[int, typer.Option("--count", help="How many h_i = a^-i b a^i.")] = 6,
             output: OutputOpt = None) -> int:
    """The words a^-i b a^i, which freely generate a free subgroup of F(a, b)."""
    words: list[ReducedWord] = [f2_embed(i) for i in range(1, count + 1)]
    free = is_free_basis(words)
    emit({"words": [format_word(w) for w in words], "free": free}, output)
    return 0 if free else 1


def cli_run(argv: Sequence[str] | None = None) -> int:
    """Runs the CLI and returns the exit status instead of exiting."""
    command = typer.main.get_command(app)
    try:
        rv = command.main(args=list(argv) if argv is not None else None,
                          prog_name="libredense", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 2
    except click.Abort:
        typer.echo("Aborted.", err=True)
        return 1
    except ConfigError as e:
        typer.echo(f"config error: {e}", err=True)
        return 2
    except LibreDenseError as e:
        typer.echo(f"{type(e).__name__}: {e}", err=True)
        return 1
    except OSError as e:
        typer.echo(f"I/O error: {e}", err=True)
        return 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(cli_run())
