from . import aggregate, lending, oracle, run, standin, validate

COMMANDS = [run, aggregate, lending, oracle, validate, standin]
