"""Opcode table shared by the tape and both interpreter engines."""

LEAF = 0
ADD = 1
SUB = 2
MUL = 3
DIV = 4
NEG = 5
EXP = 6
LOG = 7
SUM = 8
DOT = 9
AFFINE = 10
RELU = 11
SIGMOID = 12
SOFTMAX = 13
SQDIST = 14
NORMSUM = 15
CONCAT = 16
SLICE = 17
CLAMPMIN = 18

NAMES = {
    LEAF: "leaf", ADD: "add", SUB: "subtract", MUL: "multiply", DIV: "divide",
    NEG: "negate", EXP: "exp", LOG: "log", SUM: "sum", DOT: "dot",
    AFFINE: "affine", RELU: "relu", SIGMOID: "sigmoid", SOFTMAX: "softmax",
    SQDIST: "squared_distance", NORMSUM: "normalize_by_sum", CONCAT: "concat",
    SLICE: "slice", CLAMPMIN: "clamp_min",
}

# forward error kinds returned by the engines
OK = 0
ERR_LOG_DOMAIN = 1
ERR_ZERO_DENOM = 2

#: denominators and log arguments are kept at least this far from zero
GUARD = 1e-300
