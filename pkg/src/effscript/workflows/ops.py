"""Application-level abstract operations used by the workflows."""

from ..core import Operation

log = Operation("log")

get_topics = Operation("get_topics")
get_description = Operation("get_description")

init = Operation("init")
expand = Operation("expand")
score = Operation("score")
validate = Operation("validate")
