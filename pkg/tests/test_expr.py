"""Expression layer: parsing, printing, evaluation, derivatives, manufactured RHS."""

import math

import numpy as np
import pytest

from femopt import expr as ex
from femopt.expr import (
    BinOp,
    Const,
    ExprEvalError,
    ExprError,
    ExprSyntaxError,
    Neg,
    Var,
    differentiate,
    evaluate,
    manufacture_rhs,
    parse,
    polynomial_degree,
    to_str,
)

CORPUS = [
    "exp(-(x-0.5)^2)",
    "(x-0.5)^2",
    "1+x",
    "1-0.5*x",
    "exp(-(x-0.5)^2-(y-0.5)^2)",
    "(x-0.5)^2+(x-0.5)*(y-0.5)+(y-0.5)^2",
    "1",
    "0",
    "x*y",
    "x/(1.5-x)",
    "2*x+1",
    "-x^2",
    "x^-2",
    "1e-17*x",
    "x^0.5",
    "exp(x)*exp(y)",
    "(1+x)*(1-y)/(2+x)",
]


def closed_forms():
    # independent python lambdas for the corpus, used as evaluation oracles
    return {
        "exp(-(x-0.5)^2)": lambda x, y: math.exp(-((x - 0.5) ** 2)),
        "(x-0.5)^2": lambda x, y: (x - 0.5) ** 2,
        "1+x": lambda x, y: 1 + x,
        "1-0.5*x": lambda x, y: 1 - 0.5 * x,
        "exp(-(x-0.5)^2-(y-0.5)^2)": lambda x, y: math.exp(-((x - 0.5) ** 2) - (y - 0.5) ** 2),
        "(x-0.5)^2+(x-0.5)*(y-0.5)+(y-0.5)^2": lambda x, y: (x - 0.5) ** 2
        + (x - 0.5) * (y - 0.5)
        + (y - 0.5) ** 2,
        "x*y": lambda x, y: x * y,
        "x/(1.5-x)": lambda x, y: x / (1.5 - x),
        "2*x+1": lambda x, y: 2 * x + 1,
        "-x^2": lambda x, y: -(x**2),
        "x^-2": lambda x, y: x ** (-2.0),
        "1e-17*x": lambda x, y: 1e-17 * x,
        "x^0.5": lambda x, y: math.exp(0.5 * math.log(x)) if x > 0 else 0.0,
        "exp(x)*exp(y)": lambda x, y: math.exp(x) * math.exp(y),
        "(1+x)*(1-y)/(2+x)": lambda x, y: (1 + x) * (1 - y) / (2 + x),
    }


@pytest.mark.parametrize("text", CORPUS)
def test_round_trip_is_structural_identity(text):
    e = parse(text)
    assert parse(to_str(e)) == e


def test_round_trip_random_trees():
    # randomly composed (folded-normal-form) trees survive print -> parse
    rng = np.random.default_rng(42)
    leaves = [Const(0.5), Const(-2.0), Var("x"), Var("y"), Const(3.0)]
    binops = [ex.add, ex.sub, ex.mul, ex.div]

    def build(depth):
        if depth == 0:
            return leaves[rng.integers(len(leaves))]
        k = rng.integers(6)
        a = build(depth - 1)
        if k < 4:
            return binops[k](a, build(depth - 1))
        if k == 4:
            return ex.neg(a)
        return ex.power(a, Const(float(rng.integers(2, 4))))

    for _ in range(300):
        e = build(3)
        assert parse(to_str(e)) == e


def test_eval_matches_closed_forms():
    oracles = closed_forms()
    rng = np.random.default_rng(7)
    for text, ref in oracles.items():
        e = parse(text)
        for _ in range(20):
            x = float(rng.uniform(0.05, 0.95))
            y = float(rng.uniform(0.05, 0.95))
            got = evaluate(e, x, y)
            want = ref(x, y)
            assert got == pytest.approx(want, rel=1e-14, abs=1e-300), text


def test_eval_vectorised_matches_scalar():
    rng = np.random.default_rng(11)
    x = rng.uniform(0.05, 0.95, size=64)
    y = rng.uniform(0.05, 0.95, size=64)
    for text in CORPUS:
        e = parse(text)
        vec = evaluate(e, x, y)
        scal = np.array([evaluate(e, float(xi), float(yi)) for xi, yi in zip(x, y)])
        assert np.array_equal(vec, scal), text


def test_integer_power_is_repeated_multiplication():
    e = parse("x^3")
    rng = np.random.default_rng(3)
    for x in rng.uniform(-10, 10, size=100):
        x = float(x)
        assert evaluate(e, x) == x * x * x  # bitwise


def test_power_left_associative_and_precedence():
    # chain folds: (2^3)^2 = 64 under left association
    assert parse("2^3^2") == Const(64.0)
    assert parse("-x^2") == Neg(BinOp("^", Var("x"), Const(2.0)))
    assert parse("2*x+1") == BinOp("+", BinOp("*", Const(2.0), Var("x")), Const(1.0))
    assert parse("x-1-2") == BinOp("-", BinOp("-", Var("x"), Const(1.0)), Const(2.0))


def test_parse_errors_carry_offsets():
    with pytest.raises(ExprSyntaxError) as err:
        parse("x+*2")
    assert err.value.offset == 2
    with pytest.raises(ExprSyntaxError):
        parse("z+1")
    with pytest.raises(ExprSyntaxError):
        parse("(x+1")
    with pytest.raises(ExprSyntaxError) as err2:
        parse("1 2")
    assert err2.value.offset == 2
    with pytest.raises(ExprSyntaxError):
        parse("sin(x)")
    with pytest.raises(ExprSyntaxError):
        parse("")


def test_eval_domain_errors():
    with pytest.raises(ExprEvalError):
        evaluate(parse("1/x"), 0.0)
    with pytest.raises(ExprEvalError):
        evaluate(parse("x^0.5"), -1.0)
    with pytest.raises(ExprEvalError):
        evaluate(parse("x^-1"), 0.0)
    with pytest.raises(ExprEvalError):
        evaluate(parse("x*y"), 0.5)  # y missing


def test_no_algebraic_simplification_beyond_folding():
    # exp(x)*exp(y) must stay a product, x/(1.5-x) must stay a quotient
    e = parse("exp(x)*exp(y)")
    assert isinstance(e, BinOp) and e.op == "*"
    e = parse("x/(1.5-x)")
    assert isinstance(e, BinOp) and e.op == "/"
    # but constants fold
    assert parse("1+2*3") == Const(7.0)
    assert parse("exp(0)") == Const(1.0)


FD_STEP = 1e-6


def fd_derivative(f, x, y, var):
    if var == "x":
        return (f(x + FD_STEP, y) - f(x - FD_STEP, y)) / (2 * FD_STEP)
    return (f(x, y + FD_STEP) - f(x, y - FD_STEP)) / (2 * FD_STEP)


@pytest.mark.parametrize("text", [t for t in CORPUS if t not in ("x^0.5",)])
def test_symbolic_derivative_matches_finite_differences(text):
    # independent route: central differences must agree to 1e-6 relative
    e = parse(text)

    def f(x, y):
        return evaluate(e, x, y)

    rng = np.random.default_rng(23)
    for var in ("x", "y"):
        d = differentiate(e, var)
        for _ in range(25):
            x = float(rng.uniform(0.1, 0.9))
            y = float(rng.uniform(0.1, 0.9))
            sym = evaluate(d, x, y)
            num = fd_derivative(f, x, y, var)
            scale = max(abs(sym), abs(num), 1e-8)
            assert abs(sym - num) / scale < 1e-6, (text, var)


def test_derivative_constant_folding_gives_power_rule_shape():
    # d/dx (x-0.5)^2 -> 2*(x-0.5) with folded neutral elements
    d = differentiate(parse("(x-0.5)^2"), "x")
    assert d == parse("2*(x-0.5)")
    assert differentiate(parse("exp(x)"), "x") == parse("exp(x)")
    assert differentiate(parse("x*y"), "y") == Var("x")


def test_derivative_of_nonconstant_exponent_raises():
    with pytest.raises(ExprError):
        differentiate(parse("x^y"), "x")


def test_polynomial_degree_bounds():
    assert polynomial_degree(parse("(x-0.5)^2")) == (2, 0, 2)
    assert polynomial_degree(parse("(x-0.5)^2+(x-0.5)*(y-0.5)+(y-0.5)^2")) == (2, 2, 2)
    assert polynomial_degree(parse("x*y")) == (1, 1, 2)
    assert polynomial_degree(parse("exp(x)")) is None
    assert polynomial_degree(parse("x/(1.5-x)")) is None
    assert polynomial_degree(parse("x^-2")) is None
    assert polynomial_degree(parse("(x+y)^3")) == (3, 3, 3)


# ---------------------------------------------------------------------------
# manufactured right-hand sides


def test_manufacture_rhs_pure_diffusion_quadratic():
    # u = (x-0.5)^2, D = 1, r = 0 folds all the way down to f = -2
    f = manufacture_rhs(parse("(x-0.5)^2"), parse("1"), parse("0"), dim=1)
    assert f == Const(-2.0)


def test_manufacture_rhs_reaction_quadratic():
    # u = (x-0.5)^2, D = 1, r = 1 gives f = -2 + (x-0.5)^2
    u = parse("(x-0.5)^2")
    f = manufacture_rhs(u, parse("1"), parse("1"), dim=1)
    rng = np.random.default_rng(5)
    for x in rng.random(100):
        x = float(x)
        assert evaluate(f, x) == pytest.approx(-2.0 + (x - 0.5) ** 2, rel=1e-13)


def test_manufacture_rhs_2d_quadratic():
    # 2D quadratic with D = I, r = 0 gives the constant f = -4
    u = parse("(x-0.5)^2+(x-0.5)*(y-0.5)+(y-0.5)^2")
    f = manufacture_rhs(u, parse("1"), parse("0"), dim=2)
    assert f == Const(-4.0)


@pytest.mark.parametrize(
    "u_text,D,r,dim",
    [
        ("(x-0.5)^2", "1", "0", 1),
        ("(x-0.5)^2", "1", "1", 1),
        ("(x-0.5)^2+(x-0.5)*(y-0.5)+(y-0.5)^2", "1", "0", 2),
        ("exp(-(x-0.5)^2)", "1+x", "0", 1),
        ("exp(-(x-0.5)^2)", "exp(-(x-0.5)^2)", "exp(-(x-0.5)^2)", 1),
    ],
)
def test_manufacture_rhs_residual_vanishes(u_text, D, r, dim):
    # recompose -div(D grad u) + r u numerically from separately derived
    # pieces and check it agrees with the manufactured f at random points
    u = parse(u_text)
    De = parse(D)
    re_ = parse(r)
    f = manufacture_rhs(u, De, re_, dim=dim)
    rng = np.random.default_rng(17)
    pts = rng.uniform(0.05, 0.95, size=(100, 2))
    for x, y in pts:
        x, y = float(x), float(y)
        yy = y if dim == 2 else None
        if dim == 1:
            flux = ex.mul(De, differentiate(u, "x"))
            lhs = -evaluate(differentiate(flux, "x"), x) + evaluate(re_, x) * evaluate(u, x)
        else:
            ux, uy = differentiate(u, "x"), differentiate(u, "y")
            div_flux = evaluate(differentiate(ex.mul(De, ux), "x"), x, yy) + evaluate(
                differentiate(ex.mul(De, uy), "y"), x, yy
            )
            lhs = -div_flux + evaluate(re_, x, yy) * evaluate(u, x, yy)
        rhs = evaluate(f, x, yy)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_manufacture_rhs_anisotropic_and_symmetry_check():
    u = parse("x*y")
    D = ((parse("1"), parse("0.5")), (parse("0.5"), parse("2")))
    f = manufacture_rhs(u, D, parse("0"), dim=2)
    # flux = (0.5x + y, 2x + 0.5y); divergence = 0.5 + 0.5 = 1
    assert evaluate(f, 0.3, 0.7) == pytest.approx(-1.0, rel=1e-14)
    bad = ((parse("1"), parse("x")), (parse("y"), parse("2")))
    with pytest.raises(ExprError):
        manufacture_rhs(u, bad, parse("0"), dim=2)


def test_conormal_flux_sides():
    u = parse("(x-0.5)^2+(x-0.5)*(y-0.5)+(y-0.5)^2")
    h = ex.conormal_flux(u, parse("1"), dim=2)
    # u_y = (x-0.5) + 2(y-0.5); bottom normal is (0,-1)
    x = 0.25
    assert evaluate(h["bottom"], x, 0.0) == pytest.approx(-((x - 0.5) + 2 * (0.0 - 0.5)), rel=1e-14)
    assert evaluate(h["top"], x, 1.0) == pytest.approx((x - 0.5) + 2 * (1.0 - 0.5), rel=1e-14)
