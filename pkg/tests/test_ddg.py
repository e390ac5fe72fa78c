from __future__ import annotations

import random

import numpy as np
import pytest

from ckptvars.bindings import LocalRegistry, ParamSlot, Reg, Tracker, VarKey
from ckptvars.ddg import (
    AccessKind, DDGBuilder, DepGraph, RegRegMap, contract, flush_store,
    is_mli, step_alloca, step_arith, step_call, step_load_store, to_dot,
)
from ckptvars.synth import emit_program, oracle
from ckptvars.synth.generate import random_program
from ckptvars.synth.model import (
    Assign, Bin, CallExpr, Const, Decl, Elem, Fill, Function, Loop, MiniProgram, PtrAssign, Var,
    layout,
)
from ckptvars.trace import call_depths, parse_block, parse_trace

from conftest import run_program

P = VarKey(0x7FFE0010, "p")
B = VarKey(0x7FFE0040, "b")


def blk(dyn, fn, line, opcode, *ops):
    lines = [f"I|{dyn}|{fn}|{line}:1|0|{opcode}"]
    lines += [f"O|{slot}|64|{int(reg)}|{name}|{value}" for slot, reg, name, value in ops]
    return parse_block("\n".join(lines) + "\n")


def builder(mli=()):
    return DDGBuilder(list(mli), Tracker("foo"))


# -- reg-var map ---------------------------------------------------------------

def test_load_binds_register_to_variable():
    b = builder()
    step_load_store(b, blk(1, "foo", 6, "Load", (1, 1, "p", hex(P.address)), ("r", 1, "8", 5)))
    assert b.binding.var_of("8") == P


def test_gep_then_load_both_bound():
    b = builder()
    step_load_store(b, blk(1, "foo", 17, "GetElementPtr", (1, 1, "b", hex(B.address)),
                           (2, 0, "", 1), ("r", 1, "11", hex(B.address + 8))))
    step_load_store(b, blk(2, "foo", 17, "Load", (1, 1, "11", hex(B.address + 8)),
                           ("r", 1, "12", 7)))
    assert b.binding.var_of("11") == B
    assert b.binding.var_of("12") == B
    assert b.binding.lookup("12").elem == B.address + 8


def test_bitcast_of_unbound_register_warns():
    b = builder()
    before = dict(b.binding.top.regs)
    step_load_store(b, blk(1, "foo", 3, "BitCast", (1, 1, "44", "0x10"), ("r", 1, "45", "0x10")))
    assert any(w.startswith("UnboundRegister") for w in b.warnings)
    assert b.binding.top.regs == before


def test_rebinding_replaces_in_same_frame():
    b = builder()
    step_load_store(b, blk(1, "foo", 6, "Load", (1, 1, "p", hex(P.address)), ("r", 1, "8", 5)))
    step_load_store(b, blk(2, "foo", 7, "Load", (1, 1, "b", hex(B.address)), ("r", 1, "8", 5)))
    assert b.binding.var_of("8") == B


# -- reg-reg map ---------------------------------------------------------------

def test_mul_links_input_to_result():
    b = builder()
    step_load_store(b, blk(1, "foo", 6, "Load", (1, 1, "p", hex(P.address)), ("r", 1, "8", 5)))
    step_arith(b, blk(2, "foo", 6, "Mul", (1, 1, "8", 5), (2, 0, "", 3), ("r", 1, "9", 15)))
    assert b.graph.has_edge(Reg("foo", "8", 1), Reg("foo", "9", 2))
    assert RegRegMap(b.binding).inputs("9") == {"8"}
    assert "9" in RegRegMap(b.binding)


def test_add_of_constants_has_no_sources():
    b = builder()
    step_arith(b, blk(1, "foo", 6, "Add", (1, 0, "", 1), (2, 0, "", 2), ("r", 1, "3", 3)))
    assert b.binding.lookup("3").inputs == ()
    assert not b.graph.parents(Reg("foo", "3", 1))


def test_chain_gives_transitive_register_path():
    # a + b + c over two Adds, emitted by the synth harness
    p = layout(MiniProgram(
        decls=(Decl("a"), Decl("b"), Decl("c"), Decl("d")),
        pre=(Assign(Var("a"), Const(1)), Assign(Var("b"), Const(2)), Assign(Var("c"), Const(3))),
        loop=Loop("it", 1, (Assign(Var("d"), Bin("Add", Bin("Add", Var("a"), Var("b")), Var("c"))),)),
    ))
    seq = parse_trace(emit_program(p)[0].encode())
    line = p.loop.body[0].line
    adds = [i for i in seq if i.line == line and i.opcode.value == "Add"]
    loads = {i.operand(1).name: i for i in seq if i.line == line and i.opcode.value == "Load"}
    b = DDGBuilder([], Tracker())
    for k, ins in enumerate(seq):
        b.step(ins, seq[k + 1] if k + 1 < len(seq) else None)
    t1, t2 = (Reg(i.function, i.result.name, i.dyn_id) for i in adds)
    a_reg = Reg("main", loads["a"].result.name, loads["a"].dyn_id)
    c_reg = Reg("main", loads["c"].result.name, loads["c"].dyn_id)
    assert b.graph.has_edge(a_reg, t1) and b.graph.has_edge(t1, t2)
    assert b.graph.has_edge(c_reg, t2)
    assert {v.name for v in b.graph.children(t2)} == {"d"}


# -- calls ---------------------------------------------------------------------

def test_form1_call_is_arithmetic():
    b = DDGBuilder([], Tracker("main"))
    b.step(blk(1, "main", 5, "Load", (1, 1, "x", "0x100"), ("r", 1, "37", 2)))
    call = blk(2, "main", 5, "Call", (1, 1, "37", 2), (2, 0, "", 3), (3, 1, "pow", "0x0"),
               ("r", 1, "38", 8))
    step_call(b, call, blk(3, "main", 6, "Br"))
    assert b.graph.has_edge(Reg("main", "37", 1), Reg("main", "38", 2))
    assert b.binding.depth == 0


def _foo_call():
    a, bb = VarKey(0x200, "a"), VarKey(0x208, "b")
    t = Tracker("main")
    b = DDGBuilder([a, bb], t)
    b.step(blk(1, "main", 16, "Load", (1, 1, "a", "0x200"), ("r", 1, "5", 1)))
    b.step(blk(2, "main", 16, "Load", (1, 1, "b", "0x208"), ("r", 1, "6", 2)))
    call = blk(3, "main", 16, "Call", (1, 1, "5", 1), (2, 1, "6", 2), (3, 1, "foo", "0x0"),
               ("f", 1, "p", 1), ("f", 1, "q", 2), ("r", 1, "7", 0))
    return a, bb, b, call


def test_form2_call_binds_params_to_arguments():
    a, bb, b, call = _foo_call()
    saved = [dict(f.regs) for f in b.binding.frames]
    step_call(b, call, blk(4, "foo", 2, "Alloca", (1, 0, "", 8), ("r", 1, "p.addr", "0x7ffd0000")))
    assert b.binding.depth == 1
    assert b.binding.param_var("p") == a
    assert b.binding.param_var("q") == bb
    # triplet argument -> parameter: edge from the argument register to the slot
    assert b.graph.has_edge(Reg("main", "5", 1), ParamSlot("foo", "p", 3))
    ret = blk(5, "foo", 4, "Ret", (1, 0, "", 0))
    step_call(b, ret, blk(6, "main", 16, "Store"))
    assert b.binding.depth == 0
    regs = dict(b.binding.top.regs)
    assert "7" in regs
    del regs["7"]
    assert regs == saved[0]


def test_arity_mismatch_warns():
    _, _, b, call = _foo_call()
    bad = call._replace(operands=tuple(o for o in call.operands if o.name != "q"))
    step_call(b, bad, blk(4, "foo", 2, "Br"))
    assert any(w.startswith("ArityMismatch") for w in b.warnings)
    assert b.binding.depth == 1


# -- locals --------------------------------------------------------------------

def test_alloca_registry():
    reg = LocalRegistry()
    step_alloca(reg, blk(1, "foo", 2, "Alloca", (1, 0, "", 8), ("r", 1, "sum", "0x7ffd0000")))
    entry = reg.lookup(0x7FFD0000)
    assert (entry.name, entry.function, entry.size) == ("sum", "foo", 8)
    step_alloca(reg, blk(9, "foo", 2, "Alloca", (1, 0, "", 8), ("r", 1, "sum", "0x7ffd0100")))
    assert len(reg) == 2 and 0x7FFD0000 in reg and 0x7FFD0100 in reg


def test_is_mli_by_address():
    mli = [VarKey(0x10, "sum"), VarKey(0x20, "a")]
    assert is_mli(VarKey(0x10, "sum"), mli)
    assert not is_mli(VarKey(0x90, "sum"), mli)
    assert not is_mli(VarKey(0x99, "zz"), mli)
    assert not is_mli(Reg("main", "sum", 1), mli)


def test_shadowing_local_is_not_mli():
    helper = Function("helper", locals=(Decl("x"),), body=(Assign(Var("x"), Const(1)),),
                      ret=Var("x"))
    p = MiniProgram(
        decls=(Decl("x"), Decl("y")),
        pre=(Assign(Var("x"), Const(1)), Assign(Var("y"), Var("x"))),
        loop=Loop("it", 2, (Assign(Var("y"), Bin("Add", Var("x"), CallExpr("helper", ()))),)),
        functions=(helper,),
    )
    result, lay = run_program(p)
    locals_x = [a for a, es in result.tracker.memory.registry.locals.items()
                if any(e.name == "x" and e.function == "helper" for e in es)]
    assert locals_x
    mli = result.mli
    assert VarKey(lay.slots["x"], "x") in mli
    for addr in locals_x:
        assert addr != lay.slots["x"]
        assert not is_mli(VarKey(addr, "x"), mli)


# -- stores and events ---------------------------------------------------------

def test_constant_store_has_no_sources():
    b = builder([P])
    flush_store(b, blk(1, "foo", 3, "Store", (1, 0, "", 4), (2, 1, "p", hex(P.address))))
    (ev,) = b.events
    assert ev.kind is AccessKind.WRITE and ev.variable == P and ev.sources == ()


def test_store_through_pointer_alias_targets_source():
    p = MiniProgram(
        decls=(Decl("a", 3), Decl("s"), Decl("ptr", storage="pointer")),
        pre=(Fill("a", Const(1)), PtrAssign("ptr", "a"), Assign(Var("s"), Elem("ptr", 1))),
        loop=Loop("it", 1, (Assign(Elem("ptr", 2), Var("s")),)),
    )
    result, lay = run_program(p)
    writes = [e for e in result.events if e.kind is AccessKind.WRITE and e.variable.name != "it"]
    assert [(e.variable.name, e.element_addr - lay.bases["a"]) for e in writes] == [("a", 16)]
    assert writes[0].sources == (VarKey(lay.slots["s"], "s"),)
    assert all(m.name != "ptr" for m in result.mli)


def test_kernel_sum_fed_by_a_and_b_through_m(kernel):
    g = kernel.complete
    names = {v.name: v for v in g.vertices if isinstance(v, VarKey)}
    m, s = names["m"], names["sum"]

    def reaches(u, v):
        stack, seen = [v], set()
        while stack:
            x = stack.pop()
            if x == u:
                return True
            if x in seen:
                continue
            seen.add(x)
            stack.extend(g.parents(x))
        return False

    assert reaches(m, s)
    assert reaches(names["a"], m) and reaches(names["b"], m)
    sum_writes = [e for e in kernel.events if e.variable == s and e.kind is AccessKind.WRITE]
    assert sum_writes and all(e.sources == (m,) for e in sum_writes)


def test_kernel_contraction(kernel):
    c = kernel.contracted
    by = {v.name: v for v in c.vertices}
    assert set(by) == {"s", "r", "a", "b", "sum"}
    assert {v.name for v in c.parents(by["sum"])} == {"a", "b"}
    assert {v.name for v in c.parents(by["r"])} == {"r", "s"}
    assert c.has_edge(by["r"], by["r"])
    assert {v.name for v in c.parents(by["a"])} == {"r", "s"}


def test_empty_loop_body():
    p = MiniProgram(decls=(Decl("a"),), pre=(Assign(Var("a"), Const(1)),),
                    loop=Loop("it", 2, ()))
    result, _ = run_program(p)
    assert {e.variable.name for e in result.events} <= {"it"}
    assert {(u.name, v.name) for u, v in result.contracted.edges()} <= {("it", "it")}


def test_mli_only_graph_is_fixpoint():
    mli = [VarKey(i, f"v{i}") for i in range(4)]
    g = DepGraph()
    for u, v in [(0, 1), (1, 2), (2, 2), (3, 0)]:
        g.add_edge(mli[u], mli[v], u)
    assert contract(g, mli).edges() == g.edges()


def _closure_oracle(adj: np.ndarray, mli: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(paths whose interior avoids MLI vertices, all paths), by Floyd-Warshall."""
    n = len(adj)
    via_local = adj.copy()
    for k in range(n):
        if not mli[k]:
            via_local |= np.outer(via_local[:, k], via_local[k, :])
    full = adj.copy()
    for k in range(n):
        full |= np.outer(full[:, k], full[k, :])
    return via_local, full


@pytest.mark.parametrize("seed", range(25))
def test_contraction_matches_closure_oracle(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 200)
    adj = np.zeros((n, n), dtype=bool)
    for _ in range(rng.randint(0, 3 * n)):
        u, v = sorted(rng.sample(range(n), 2))
        adj[u, v] = True
    tag = np.array([rng.random() < 0.3 for _ in range(n)])
    verts = [VarKey(i, f"v{i}") for i in range(n)]
    g = DepGraph()
    for u, v in zip(*np.nonzero(adj)):
        g.add_edge(verts[u], verts[v])
    mli = [verts[i] for i in range(n) if tag[i]]
    got = {(u.address, v.address) for u, v in contract(g, mli).edges()}
    via_local, full = _closure_oracle(adj, tag)
    want = {(u, v) for u, v in zip(*np.nonzero(via_local)) if tag[u] and tag[v]}
    assert got == want
    # reachability between MLI vertices is preserved
    m = np.zeros((n, n), dtype=bool)
    for u, v in got:
        m[u, v] = True
    _, closed = _closure_oracle(m, np.zeros(n, dtype=bool))
    assert all(closed[u, v] == full[u, v] for u in range(n) for v in range(n) if tag[u] and tag[v])


def test_edge_times_recorded():
    g = DepGraph()
    a, b = VarKey(1, "a"), VarKey(2, "b")
    g.add_edge(a, b, 7)
    g.add_edge(a, b, 9)
    assert g.edge_time(a, b) == 7
    assert g.children(a) == {b}


# -- whole-trace properties ----------------------------------------------------

def _mapped_events(result, lay):
    names = {slot: n for n, slot in lay.slots.items()}
    out = []
    for e in result.events:
        n = names.get(e.variable.address)
        if n is None:
            continue
        base = lay.bases.get(n, e.variable.address)
        out.append((e.kind.value, n, (e.element_addr - base) // 8, e.line))
    return out


@pytest.mark.parametrize("seed", range(0, 300, 3))
def test_event_log_equals_oracle(seed):
    p = layout(random_program(seed))
    result, lay = run_program(p)
    assert _mapped_events(result, lay) == oracle(p).events
    ts = [e.t for e in result.events]
    assert ts == sorted(ts)


@pytest.mark.parametrize("seed", range(30))
def test_frame_discipline(seed):
    p = layout(random_program(seed))
    seq = parse_trace(emit_program(p)[0].encode())
    depths = call_depths(seq)
    t = Tracker()
    for i, ins in enumerate(seq[:-1]):
        t.step(ins, seq[i + 1])
        assert t.binding.depth == depths[i + 1]


@pytest.mark.parametrize("seed", range(40))
def test_contracted_edges_witnessed_by_events(seed):
    p = layout(random_program(seed))
    result, _ = run_program(p)
    mli = set(result.mli)
    # variable-level flow from the event log, expanded through non-MLI variables
    flow: dict = {}
    for e in result.events:
        if e.kind is AccessKind.WRITE:
            flow.setdefault(e.variable, set()).update(e.sources)

    def mli_sources(v, seen=()):
        out = set()
        for s in flow.get(v, ()):
            if s in mli:
                out.add(s)
            elif s not in seen:
                out |= mli_sources(s, seen + (s,))
        return out

    for u, v in result.contracted.edges():
        assert u in mli_sources(v), (u, v)


def test_determinism(cg_program_fixture):
    r1, _ = run_program(cg_program_fixture)
    r2, _ = run_program(cg_program_fixture)
    assert r1.complete.edges() == r2.complete.edges()
    assert r1.events == r2.events
    assert to_dot(r1.contracted, "c", r1.mli) == to_dot(r2.contracted, "c", r2.mli)


def test_to_dot_shapes(kernel):
    dot = to_dot(kernel.contracted, "contracted", kernel.mli)
    assert dot.startswith("digraph contracted {")
    assert dot.count("shape=box") == 5
    assert dot.count("->") == len(kernel.contracted.edges())
