"""Hand-written mini programs used as golden fixtures."""

from __future__ import annotations

from .model import (
    ArrayArg, Assign, Bin, CallExpr, CallStmt, Const, Decl, Elem, Fill, Function, Loop,
    MiniProgram, Param, Var,
)


def example_program(iterations: int = 3) -> MiniProgram:
    """Small loop kernel with a helper, one value per pattern.

    Lines 1-5 hold ``foo(p, q)``; ``main`` starts at line 6 and its loop
    spans lines 13-21.  Expected: r WAR, a RAPO, sum Outcome, it Index.
    """
    foo = Function(
        "foo",
        params=(Param("p"), Param("q")),
        locals=(Decl("t"),),
        body=(Assign(Var("t"), Bin("FMul", Var("p"), Var("q")), 3),),
        ret=Var("t"),
        line=1,
        ret_line=4,
    )
    decls = (
        Decl("a", 4, line=7), Decl("b", 4, line=7), Decl("sum", line=7),
        Decl("s", line=8), Decl("r", line=8), Decl("m", line=8), Decl("it", line=8),
    )
    pre = (
        Assign(Var("s"), Bin("Mul", Const(2), Const(1)), 9),
        Assign(Var("r"), Bin("Add", Var("s"), Const(1)), 10),
        Fill("a", Bin("FMul", Const(1.5), Const(2)), 11),
        Fill("b", Bin("FAdd", Const(0.5), Const(1)), 11),
        Assign(Var("sum"), Bin("FAdd", Elem("a", 0), Elem("b", 0)), 12),
    )
    body = (
        Assign(Var("s"), Bin("Add", Var("it"), Const(1)), 15),
        Assign(Elem("a", 0), CallExpr("foo", (Var("s"), Var("r"))), 16),
        Fill("b", Bin("FMul", Elem("a", "k"), Const(2)), 17),
        Assign(Var("r"), Bin("Mul", Var("r"), Var("s")), 18),
        Assign(Var("m"), Bin("FMul", Elem("a", 1), Elem("b", 1)), 19),
        Assign(Var("sum"), Bin("FAdd", Var("m"), Const(0)), 20),
    )
    post = (CallStmt(CallExpr("printf", (Var("sum"),)), 22),)
    return MiniProgram(
        decls=decls, pre=pre,
        loop=Loop("it", iterations, body, 13, 21),
        post=post, functions=(foo,), main_line=6, exit_line=23,
    )


def _dot(u: str, v: str, n: int):
    e = Bin("FMul", Elem(u, 0), Elem(v, 0))
    for i in range(1, n):
        e = Bin("FAdd", e, Bin("FMul", Elem(u, i), Elem(v, i)))
    return e


def cg_program(n: int = 2, inner: int = 2, iterations: int = 2) -> MiniProgram:
    """Conjugate-gradient kernel: ``conj_grad`` at lines 1-15, main loop 17-20.

    Vectors have ``n`` elements, ``A`` is stored row-major, and the inner
    solver loop is unrolled ``inner`` times.
    """
    def matvec_row(i: int, vec: str):
        e = Bin("FMul", Elem("A", i * n), Elem(vec, 0))
        for j in range(1, n):
            e = Bin("FAdd", e, Bin("FMul", Elem("A", i * n + j), Elem(vec, j)))
        return e

    body = [
        Fill("z", Const(0.0), 2),
        Fill("r", Elem("x", "k"), 3),
        Assign(Var("rho"), _dot("r", "r", n), 4),
        Fill("p", Elem("r", "k"), 5),
    ]
    for _ in range(inner):
        body += [Assign(Elem("q", i), matvec_row(i, "p"), 7) for i in range(n)]
        body += [
            Assign(Var("alpha"), Bin("FDiv", Var("rho"), _dot("p", "q", n)), 8),
            Fill("z", Bin("FAdd", Elem("z", "k"), Bin("FMul", Var("alpha"), Elem("p", "k"))), 9),
            Assign(Var("rho0"), Bin("FAdd", Var("rho"), Const(0)), 10),
            Fill("r", Bin("FSub", Elem("r", "k"), Bin("FMul", Var("alpha"), Elem("q", "k"))), 11),
            Assign(Var("rho"), _dot("r", "r", n), 12),
            Assign(Var("beta"), Bin("FDiv", Var("rho"), Var("rho0")), 13),
            Fill("p", Bin("FAdd", Elem("r", "k"), Bin("FMul", Var("beta"), Elem("p", "k"))), 14),
        ]
    resid = None
    for i in range(n):
        d = Bin("FSub", Elem("x", i), matvec_row(i, "z"))
        sq = Bin("FMul", d, d)
        resid = sq if resid is None else Bin("FAdd", resid, sq)
    conj_grad = Function(
        "conj_grad",
        params=tuple(Param(v, True) for v in ("x", "z", "p", "q", "r", "A")),
        locals=(Decl("rho"), Decl("rho0"), Decl("alpha"), Decl("beta")),
        body=tuple(body),
        ret=CallExpr("sqrt", (resid,)),
        line=1,
        ret_line=15,
    )
    decls = tuple(Decl(v, n, line=16) for v in ("x", "z", "p", "q", "r")) + (
        Decl("A", n * n, line=16), Decl("rnorm", line=16), Decl("zeta", line=16),
        Decl("nrm", line=16), Decl("iter", line=16),
    )
    pre = (
        Fill("x", Const(1.0), 16),
        Fill("z", Const(0.0), 16),
        Fill("p", Const(0.0), 16),
        Fill("q", Const(0.0), 16),
        Fill("r", Const(0.0), 16),
        Fill("A", Bin("FAdd", Const(1.0), Const(0.5)), 16),
    )
    loop_body = (
        Assign(Var("rnorm"), CallExpr("conj_grad", tuple(
            ArrayArg(v) for v in ("x", "z", "p", "q", "r", "A"))), 18),
        Assign(Var("nrm"), _dot("z", "z", n), 19),
        Fill("x", Bin("FDiv", Elem("z", "k"), CallExpr("sqrt", (Var("nrm"),))), 19),
        Assign(Var("zeta"), Bin("FAdd", Const(20.0), Bin("FDiv", Const(1.0), _dot("x", "z", n))), 20),
    )
    post = (CallStmt(CallExpr("printf", (Var("zeta"),)), 22),)
    return MiniProgram(
        decls=decls, pre=pre,
        loop=Loop("iter", iterations, loop_body, 17, 20),
        post=post, functions=(conj_grad,), main_line=16, exit_line=23,
    )
