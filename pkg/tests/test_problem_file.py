import json

import pytest

from conftest import BUNDLED
from sosexit.cli.problem_file import (
    ProblemFileError,
    bundled_names,
    dumps_problem,
    load_problem,
    loads_problem,
    parse_problem,
    problem_from_dict,
    problem_to_dict,
)
from sosexit.model import has_errors, validate
from sosexit.polyalg import parse_polynomial


def base():
    return {
        "dimension": 1,
        "drift": ["1 + 2*x1"],
        "diffusion": [["1.4142135623730951*x1"]],
        "domain": {"interior": ["x1*(1 - x1) >= 0", "1 - x1^2 >= 0"],
                   "boundary": [{"eq": ["x1*(1 - x1)"], "ineq": [], "label": "ends"}]},
        "g": "x1^2",
        "initial": {"type": "dirac", "point": [0.5]},
    }


def errors_of(data):
    with pytest.raises(ProblemFileError) as info:
        problem_from_dict(data, "t.json")
    return info.value.errors


def test_bundled_list():
    assert bundled_names() == sorted(BUNDLED)


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_valid_and_round_trip(name):
    prob, digest = load_problem(name)
    assert len(digest) == 64
    assert not has_errors(validate(prob))
    again = loads_problem(dumps_problem(prob))
    assert again == prob
    assert problem_to_dict(again) == problem_to_dict(prob)


def test_scalar_contents(scalar):
    x = lambda s: parse_polynomial(s, 1)
    assert scalar.sde.drift == (x("1 + 2*x1"),)
    assert scalar.sde.diffusion[0][0].coefficient((1,)) == 1.4142135623730951
    assert scalar.g == x("x1^2")
    assert scalar.initial.point == (0.5,)
    assert scalar.domain.boundary[0].equalities == (x("x1 - x1^2"),)


def test_quartic_contents(quartic):
    x = lambda s: parse_polynomial(s, 2)
    assert quartic.domain.interior.inequalities[0] == x("1 - x1^4 - x2^4")
    assert quartic.domain.boundary[0].equalities[0] == x("x1^4 + x2^4 - 1")
    assert quartic.g == x("x1^2 + x2^2")
    assert quartic.initial.point == (0.0, 0.0)


def test_relations():
    d = base()
    d["domain"]["interior"] = ["x1 <= 1", "x1 >= x1^2", "1 - x1^2"]
    d["domain"]["boundary"][0]["eq"] = ["x1^2 = x1"]
    prob = problem_from_dict(d)
    x = lambda s: parse_polynomial(s, 1)
    assert prob.domain.interior.inequalities == (x("1 - x1"), x("x1 - x1^2"), x("1 - x1^2"))
    assert prob.domain.boundary[0].equalities == (x("x1^2 - x1"),)


def test_coefficient_map_form():
    d = base()
    d["g"] = {"(2)": 1.0}
    d["drift"] = [[[[0], 1.0], [[1], 2.0]]]
    prob = problem_from_dict(d)
    assert prob.g == parse_polynomial("x1^2", 1)
    assert prob.sde.drift[0] == parse_polynomial("1 + 2*x1", 1)


def test_moment_initial_law():
    d = base()
    d["initial"] = {"type": "moments", "degree": 2, "values": {"(0)": 1.0, "(1)": 0.5, "(2)": 0.3}}
    prob = problem_from_dict(d)
    assert prob.initial.moments[(2,)] == 0.3
    assert loads_problem(dumps_problem(prob)) == prob


def test_diffusion_row_count():
    d = base()
    d["diffusion"] = [["x1"], ["1"]]
    errs = errors_of(d)
    assert any(e.where == "diffusion" and "dimension mismatch" in e.message for e in errs)


def test_syntax_error_located():
    d = base()
    d["drift"] = ["1 + * x1"]
    (err,) = errors_of(d)
    assert err.where == "drift[0]"
    assert err.column == 5


def test_relation_column_offset():
    d = base()
    d["domain"]["interior"][0] = "x1 >= x1^^2"
    (err,) = errors_of(d)
    assert err.where == "domain.interior[0]"
    assert err.column == 10


def test_collects_all_errors():
    d = base()
    d["g"] = "x2"
    d["initial"] = {"type": "dirac", "point": [0.5, 0.5]}
    d["extra"] = 1
    wheres = {e.where for e in errors_of(d)}
    assert {"g", "initial.point", "extra"} <= wheres


def test_missing_fields():
    d = base()
    del d["g"]
    del d["domain"]["boundary"]
    wheres = {e.where for e in errors_of(d)}
    assert wheres == {"g", "domain.boundary"}


def test_bad_json_has_line():
    with pytest.raises(ProblemFileError) as info:
        loads_problem('{\n  "dimension": 1,\n  "drift": [\n}')
    err = info.value.errors[0]
    assert err.line == 4


def test_parse_problem_validates(tmp_path):
    d = base()
    d["domain"]["interior"] = ["x1*(1 - x1) >= 0"]
    path = tmp_path / "noball.json"
    path.write_text(json.dumps(d))
    with pytest.raises(ProblemFileError, match="--add-ball"):
        parse_problem(str(path))
    assert parse_problem(str(path), check=False).n == 1


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_problem("no/such/file.json")
