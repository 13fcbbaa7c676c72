"""Step traces worked out by hand from the reduction rules."""

H_OP = "handler {op(x) -> return x}"
H_ASK = "handler {ask(x) -> return 42}"
H_TELL = "handler {tell(x) -> return x}"

GOLDEN = {
    "letbind": (
        "do x <- return 1 in return x",
        [
            "⟨∅; do x <- return 1 in return x⟩",
            "⟨∅; return 1⟩",
        ],
        ["LetBind"],
        "Terminal(1)",
    ),
    "if": (
        "do b <- if true then return false else return true in if b then return 1 else return 2",
        [
            "⟨∅; do b <- if true then return false else return true in if b then return 1 else return 2⟩",
            "⟨∅; do b <- return false in if b then return 1 else return 2⟩",
            "⟨∅; if false then return 1 else return 2⟩",
            "⟨∅; return 2⟩",
        ],
        ["LetStep(IfTrue)", "LetBind", "IfFalse"],
        "Terminal(2)",
    ),
    "handle": (
        f"with {H_OP} handle do y <- op(5) in return y",
        [
            f"⟨∅; with {H_OP} handle do y <- op(5) in return y⟩",
            "⟨{op} : ∅; ⌈do y <- op(5) in return y⌉⟩",
            f"⟨∅; do y <- return 5 in with {H_OP} handle return y⟩",
            f"⟨∅; with {H_OP} handle return 5⟩",
            "⟨{op} : ∅; ⌈return 5⌉⟩",
            "⟨∅; return 5⟩",
        ],
        ["With", "OpHandle", "LetBind", "With", "Unwind"],
        "Terminal(5)",
    ),
    "forward": (
        f"with {H_ASK} handle with {H_TELL} handle do a <- ask(0) in return a",
        [
            f"⟨∅; with {H_ASK} handle with {H_TELL} handle do a <- ask(0) in return a⟩",
            f"⟨{{ask}} : ∅; ⌈with {H_TELL} handle do a <- ask(0) in return a⌉⟩",
            "⟨{tell} : {ask} : ∅; ⌈⌈do a <- ask(0) in return a⌉⌉⟩",
            f"⟨{{ask}} : ∅; ⌈do a <- ask(0) in with {H_TELL} handle return a⌉⟩",
            f"⟨∅; do a <- return 42 in with {H_ASK} handle with {H_TELL} handle return a⟩",
            f"⟨∅; with {H_ASK} handle with {H_TELL} handle return 42⟩",
            f"⟨{{ask}} : ∅; ⌈with {H_TELL} handle return 42⌉⟩",
            "⟨{tell} : {ask} : ∅; ⌈⌈return 42⌉⌉⟩",
            "⟨{ask} : ∅; ⌈return 42⌉⟩",
            "⟨∅; return 42⟩",
        ],
        ["With", "With", "OpForward", "OpHandle", "LetBind", "With", "With", "Unwind", "Unwind"],
        "Terminal(42)",
    ),
    "stuck": (
        f"with {H_OP} handle do y <- op(1) in fail(y)",
        [
            f"⟨∅; with {H_OP} handle do y <- op(1) in fail(y)⟩",
            "⟨{op} : ∅; ⌈do y <- op(1) in fail(y)⌉⟩",
            f"⟨∅; do y <- return 1 in with {H_OP} handle fail(y)⟩",
            f"⟨∅; with {H_OP} handle fail(1)⟩",
            "⟨{op} : ∅; ⌈fail(1)⌉⟩",
            f"⟨∅; do _k0 <- fail(1) in with {H_OP} handle return _k0⟩",
        ],
        ["With", "OpHandle", "LetBind", "With", "OpForward"],
        'Stuck(UnhandledOp("fail"))',
    ),
}
