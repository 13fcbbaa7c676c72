from .game24 import (
    AsyncGame24Handler,
    Game24Handler,
    SolveState,
    ValidationFailed,
    brute_solve,
    check_answer,
    enumerate_moves,
    evaluate_expression,
    game24_init,
    oracle_responder,
    reconstruct,
    solvable,
)
from .research import (
    AREA,
    FIXTURE_TOPICS,
    AsyncResearchTopicsHandler,
    LogDateHandler,
    LogHandler,
    ResearchArea,
    ResearchTopicsHandler,
    TopicReport,
    research_topics,
    topics_responder,
)
from .ops import expand, get_description, get_topics, init, log, score, validate
from .tot import ScoredCandidate, top_k, tree_of_thoughts
