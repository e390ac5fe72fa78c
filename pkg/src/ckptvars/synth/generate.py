"""Seeded random mini programs for differential testing."""

from __future__ import annotations

import random

from .model import (
    BIN_OPS, FILL_INDEX, ArrayArg, Assign, Bin, CallExpr, CallStmt, Const, Decl, Elem, Fill,
    Function, Loop, MiniProgram, Param, PtrAssign, Var,
)

MAIN_NAMES = ["a", "b", "c", "d", "u", "v", "w", "s", "t", "x", "y", "z"]
LOCAL_NAMES = ["tmp", "acc", "s", "t", "x", "a", "k2"]
PARAM_NAMES = ["p", "q", "n", "m", "a", "x"]
MIN_LEN = 2


class _Scope:
    def __init__(self, scalars, arrays, lengths, callables):
        self.scalars = list(scalars)     # readable scalar names
        self.arrays = list(arrays)       # names usable with Elem / ArrayArg
        self.lengths = dict(lengths)     # name -> length known statically (None: use MIN_LEN)
        self.callables = list(callables)  # Function objects callable from here
        self.writable_scalars = []
        self.writable_arrays = []
        self.fill_arrays = []


def _index(rng: random.Random, scope: _Scope, name: str) -> int:
    n = scope.lengths.get(name) or MIN_LEN
    return rng.randrange(n)


def _expr(rng: random.Random, scope: _Scope, depth: int, fill: bool = False):
    choices = ["const"]
    if scope.scalars:
        choices += ["var"] * 3
    if scope.arrays:
        choices += ["elem"] * 3
    if depth > 0:
        choices += ["bin"] * 3
        if scope.callables:
            choices += ["call"]
        choices += ["intrinsic"]
    kind = rng.choice(choices)
    if kind == "const":
        return Const(rng.choice([0, 1, 2, 3, 0.5, 1.5]))
    if kind == "var":
        return Var(rng.choice(scope.scalars))
    if kind == "elem":
        name = rng.choice(scope.arrays)
        if fill and rng.random() < 0.5:
            return Elem(name, FILL_INDEX)
        return Elem(name, _index(rng, scope, name))
    if kind == "bin":
        return Bin(rng.choice(BIN_OPS), _expr(rng, scope, depth - 1, fill),
                   _expr(rng, scope, depth - 1, fill))
    if kind == "intrinsic":
        return CallExpr(rng.choice(["sqrt", "fabs", "exp"]), (_expr(rng, scope, depth - 1, fill),))
    with_value = [f for f in scope.callables if f.ret is not None and _callable(f, scope)]
    if not with_value:
        return _expr(rng, scope, 0, fill)
    return _call(rng, scope, rng.choice(with_value))


def _callable(f: Function, scope: _Scope) -> bool:
    return bool(scope.arrays) or not any(p.array for p in f.params)


def _call(rng: random.Random, scope: _Scope, f: Function) -> CallExpr:
    args = []
    for param in f.params:
        if param.array:
            args.append(ArrayArg(rng.choice(scope.arrays)))
        elif scope.scalars and rng.random() < 0.8:
            args.append(Var(rng.choice(scope.scalars)))
        else:
            args.append(Const(rng.choice([1, 2, 3])))
    return CallExpr(f.name, tuple(args))


def _statement(rng: random.Random, scope: _Scope, pointers=(), allow_fill=True):
    kinds = []
    if scope.writable_scalars:
        kinds += ["scalar"] * 4
    if scope.writable_arrays:
        kinds += ["elem"] * 4
    if allow_fill and scope.fill_arrays:
        kinds += ["fill"] * 2
    void = [f for f in scope.callables if _callable(f, scope)]
    if void:
        kinds += ["call"]
    if pointers:
        kinds += ["ptr"]
    if not kinds:
        return None
    kind = rng.choice(kinds)
    if kind == "scalar":
        return Assign(Var(rng.choice(scope.writable_scalars)), _expr(rng, scope, 2))
    if kind == "elem":
        name = rng.choice(scope.writable_arrays)
        return Assign(Elem(name, _index(rng, scope, name)), _expr(rng, scope, 2))
    if kind == "fill":
        return Fill(rng.choice(scope.fill_arrays), _expr(rng, scope, 2, fill=True))
    if kind == "call":
        return CallStmt(_call(rng, scope, rng.choice(void)))
    ptr = rng.choice(list(pointers))
    return PtrAssign(ptr, rng.choice([a for a in scope.arrays if a != ptr]))


def _function(rng: random.Random, name: str, earlier: list) -> Function:
    used = set()
    params = []
    for _ in range(rng.randint(0, 3)):
        pname = rng.choice([n for n in PARAM_NAMES if n not in used])
        used.add(pname)
        params.append(Param(pname, rng.random() < 0.4))
    locals_ = []
    for _ in range(rng.randint(0, 2)):
        candidates = [n for n in LOCAL_NAMES if n not in used]
        lname = rng.choice(candidates)
        used.add(lname)
        locals_.append(Decl(lname, MIN_LEN if rng.random() < 0.25 else None))
    scalars = [p.name for p in params if not p.array] + [d.name for d in locals_ if d.length is None]
    arrays = [p.name for p in params if p.array] + [d.name for d in locals_ if d.length]
    scope = _Scope(scalars, arrays, {}, earlier)
    scope.writable_scalars = [d.name for d in locals_ if d.length is None]
    scope.writable_arrays = list(arrays)
    body = []
    for _ in range(rng.randint(0, 3)):
        s = _statement(rng, scope, allow_fill=False)
        if s is not None:
            body.append(s)
    ret = _expr(rng, scope, 2) if rng.random() < 0.6 else None
    return Function(name, tuple(params), tuple(locals_), tuple(body), ret)


def random_program(seed: int, max_statements: int = 64) -> MiniProgram:
    rng = random.Random(seed)
    names = rng.sample(MAIN_NAMES, rng.randint(2, 7))
    decls, scalars, arrays, lengths, pointers = [], [], [], {}, []
    for i, name in enumerate(names):
        if i == 0 or rng.random() < 0.5:
            decls.append(Decl(name))
            scalars.append(name)
            continue
        storage = rng.choice(["stack", "stack", "heap", "opaque"])
        n = rng.randint(MIN_LEN, 4)
        decls.append(Decl(name, n, storage))
        arrays.append(name)
        lengths[name] = n
    if arrays and rng.random() < 0.3:
        decls.append(Decl("ptr", storage="pointer"))
        pointers.append("ptr")

    functions: list[Function] = []
    for i in range(rng.randint(0, 3)):
        functions.append(_function(rng, f"f{i}", list(functions)))

    scope = _Scope(scalars, arrays + pointers, lengths, functions)
    scope.writable_scalars = list(scalars)
    scope.writable_arrays = arrays + pointers
    scope.fill_arrays = list(arrays)
    budget = max_statements - sum(len(f.body) for f in functions)

    pre = [PtrAssign(p, rng.choice(arrays)) for p in pointers]
    for _ in range(rng.randint(0, 6)):
        s = _statement(rng, scope, pointers)
        if s is not None:
            pre.append(s)
    induction = "it"
    body_scope = _Scope(scalars + [induction], arrays + pointers, lengths, functions)
    body_scope.writable_scalars = list(scalars)
    body_scope.writable_arrays = arrays + pointers
    body_scope.fill_arrays = list(arrays)
    body = []
    for _ in range(rng.randint(0, 8)):
        s = _statement(rng, body_scope, pointers)
        if s is not None:
            body.append(s)
    post = []
    for _ in range(rng.randint(0, 2)):
        s = _statement(rng, scope, pointers)
        if s is not None:
            post.append(s)
    total = len(pre) + len(body) + len(post)
    if total > budget:
        post = post[: max(0, budget - len(pre) - len(body))]
    loop = Loop(induction, rng.randint(1, 3), tuple(body))
    return MiniProgram(tuple(decls), tuple(pre), loop, tuple(post), tuple(functions))
