import json
import logging
from pathlib import Path

from ..errors import ConfigError, ExplorationError
from ..schemas import BenefitKind
from ..services.oracle import DiscreteEnv, exact_induced, exact_optimal, exact_value, policy_from_record

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("oracle", help="exact utility and benefits of a policy on a discrete environment")
    parser.add_argument("env_file", type=Path)
    parser.add_argument("policy_file", type=Path)
    parser.add_argument("--cost", type=float, default=None, help="defaults to the env file's 'cost'")
    parser.add_argument("--lambda", dest="lam", type=float, default=0.0)
    parser.add_argument("--benefit", choices=[b.value for b in BenefitKind], default=BenefitKind.DEMOGRAPHIC_PARITY.value)
    parser.set_defaults(handler=handle)


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e


def handle(args) -> None:
    record = _read_json(args.env_file)
    cost = args.cost if args.cost is not None else record.get("cost")
    if cost is None or not 0.0 < float(cost) < 1.0:
        raise ConfigError(f"a cost in (0, 1) is required, got {cost!r}")
    try:
        env = DiscreteEnv.from_dict(record)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"{args.env_file}: invalid discrete environment: {e}") from e

    policy = policy_from_record(env, _read_json(args.policy_file), float(cost))
    value = exact_value(policy, env, float(cost), args.lam, BenefitKind(args.benefit))
    optimal = exact_optimal(env, float(cost))
    report = {
        "utility": value.utility,
        "benefits": list(value.benefits),
        "objective": value.objective,
        "gap": value.gap,
        "optimal_utility": optimal.value.utility,
        "optimal_accept": optimal.accept.tolist(),
    }
    try:
        induced = exact_induced(env, policy)
        report["induced"] = {
            "normalizer": induced.normalizer,
            "group_normalizers": list(induced.group_normalizers),
        }
    except ExplorationError as e:
        logger.warning(f"No induced distribution: {e}")
    print(json.dumps(report, indent=2))
