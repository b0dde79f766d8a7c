"""Command-line entry point.

Subcommands:
    train     run the configured episode budget, logging metrics and
              writing best/final/resume checkpoints
    evaluate  summary statistics of a checkpoint or named baseline
    simulate  per-step JSON trace of one episode, with trip chains
    oracle    exact solve of a small scenario plus optimality gaps

Exit codes: 0 success, 1 configuration error, 2 runtime divergence.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import baselines
from .config import ConfigError, load_scenario
from .env import RestorationEnv
from .td3 import CheckpointError, TD3Agent, TrainingDiverged

METRIC_FIELDS = ["episode", "return", "critic1_loss", "critic2_loss",
                 "actor_loss", "validation_mean", "validation_std"]
VALIDATION_SEED_BASE = 10_000_019
EVALUATION_SEED_BASE = 20_000_003


def _policy_from_name(name, agent=None):
    """Resolve a policy callable(env) -> Action."""
    if name == "random":
        rng = np.random.default_rng(0)

        def act(env):
            return env.decode_action(rng.uniform(-1.0, 1.0,
                                                 size=env.action_dim))
        return act
    if name == "greedy":
        return baselines.greedy_policy
    if name == "no_mess":
        return baselines.no_mess_action
    if name == "idle":
        return baselines.idle_action
    if name == "agent":
        def act(env):
            raw = agent.select_action(env.observation(), mode="greedy")
            return env.decode_action(raw)
        return act
    raise ConfigError(f"unknown policy {name!r}; pick a checkpoint path or "
                      "one of random, greedy, no_mess, idle")


def greedy_agent_return(agent, env, seed):
    """Noise-free rollout return of the agent's deterministic policy."""
    obs = env.reset(seed)
    total = 0.0
    done = False
    while not done:
        action = env.decode_action(agent.select_action(obs, mode="greedy"))
        obs, r, done, _ = env.step(action)
        total += r
    return total


def validate_agent(agent, env, n_episodes, seed_base=VALIDATION_SEED_BASE):
    returns = [greedy_agent_return(agent, env, seed_base + i)
               for i in range(n_episodes)]
    return float(np.mean(returns)), float(np.std(returns))


def train(config, out_dir, episodes=None, seed=None, resume_from=None,
          log=print):
    """Run (or resume) a training session.

    Writes metrics.csv (one row per episode; validation columns filled
    every validate_every episodes), checkpoint_best.npz on validation
    improvements, checkpoint_resume.npz periodically and
    checkpoint_final.npz at the end.  Returns the trained agent.
    """
    os.makedirs(out_dir, exist_ok=True)
    env = RestorationEnv(config)
    val_env = RestorationEnv(config)
    base_seed = config.seed if seed is None else seed
    budget = episodes if episodes is not None else config.train.episodes

    if resume_from:
        agent = TD3Agent.load_checkpoint(resume_from)
        if (agent.obs_dim != env.observation_dim
                or agent.act_dim != env.action_dim):
            raise CheckpointError(
                "checkpoint does not match the scenario's dimensions")
        start = agent.episodes_done
        log(f"resuming at episode {start}")
    else:
        agent = TD3Agent(env.observation_dim, env.action_dim, config.td3,
                         seed=base_seed)
        start = 0

    metrics_path = os.path.join(out_dir, "metrics.csv")
    new_file = not (resume_from and os.path.exists(metrics_path))
    mode = "w" if new_file else "a"
    best_val = -np.inf  # resumed runs re-earn their best checkpoint
    best_path = os.path.join(out_dir, "checkpoint_best.npz")

    with open(metrics_path, mode, newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        if new_file:
            writer.writeheader()
        for episode in range(start, budget):
            try:
                ep_return, diags = agent.train_episode(
                    env, seed=base_seed + episode)
            except TrainingDiverged:
                # leave a post-mortem: networks, optimizer moments, rng
                agent.save_checkpoint(
                    os.path.join(out_dir, "checkpoint_diverged.npz"),
                    include_buffer=True,
                    extra_meta={"diverged_at_episode": episode})
                raise
            row = {
                "episode": episode + 1,
                "return": f"{ep_return:.6f}",
                "critic1_loss": "", "critic2_loss": "", "actor_loss": "",
                "validation_mean": "", "validation_std": "",
            }
            if diags:
                row["critic1_loss"] = f"{np.mean([d['critic1_loss'] for d in diags]):.6f}"
                row["critic2_loss"] = f"{np.mean([d['critic2_loss'] for d in diags]):.6f}"
                actor = [d["actor_loss"] for d in diags
                         if d["actor_loss"] is not None]
                if actor:
                    row["actor_loss"] = f"{np.mean(actor):.6f}"
            if (episode + 1) % config.train.validate_every == 0:
                vmean, vstd = validate_agent(
                    agent, val_env, config.train.validation_episodes)
                row["validation_mean"] = f"{vmean:.6f}"
                row["validation_std"] = f"{vstd:.6f}"
                if vmean > best_val:
                    best_val = vmean
                    agent.save_checkpoint(best_path,
                                          extra_meta={"validation_mean": vmean})
                agent.save_checkpoint(
                    os.path.join(out_dir, "checkpoint_resume.npz"),
                    include_buffer=True)
                log(f"episode {episode + 1}: return {ep_return:.4f} "
                    f"validation {vmean:.4f} +- {vstd:.4f}")
            writer.writerow(row)
            fh.flush()
    agent.save_checkpoint(os.path.join(out_dir, "checkpoint_final.npz"))
    agent.save_checkpoint(os.path.join(out_dir, "checkpoint_resume.npz"),
                          include_buffer=True)
    return agent


def evaluate(config, policy_act, n_episodes, seed_base):
    """Mean/std return, dollar cost breakdown and restoration fractions.

    Restoration fraction per microgrid is restored energy over total
    load energy, pooled across the evaluation episodes.
    """
    env = RestorationEnv(config)
    returns = []
    cost = {"interruption": 0.0, "generation": 0.0, "battery": 0.0,
            "transport": 0.0}
    restored = {m: 0.0 for m in env.mg_ids}
    load = {m: 0.0 for m in env.mg_ids}
    for i in range(n_episodes):
        total, records = baselines.run_episode(env, policy_act,
                                               seed=seed_base + i)
        returns.append(total)
        for rec in records:
            rw = rec["reward"]
            cost["generation"] += rw["gen_cost"]
            cost["battery"] += rw["battery_cost"]
            cost["transport"] += rw["transport_cost"]
            for mg in rec["microgrids"]:
                w = config.microgrids[mg["id"]].interruption_cost
                cost["interruption"] += (w * (mg["p_load"] - mg["p_r"])
                                         * env.dt)
                restored[mg["id"]] += mg["p_r"] * env.dt
                load[mg["id"]] += mg["p_load"] * env.dt
    cost = {k: v / n_episodes for k, v in cost.items()}
    cost["total"] = sum(cost.values())
    fractions = {m: (restored[m] / load[m] if load[m] > 0 else 0.0)
                 for m in env.mg_ids}
    return {
        "episodes": n_episodes,
        "return_mean": float(np.mean(returns)),
        "return_std": float(np.std(returns)),
        "cost_per_episode": cost,
        "restoration_fraction": fractions,
    }


def trip_chains(records, mess_ids):
    """Condense step records into each vehicle's sequence of stays and
    transits."""
    chains = {w: [] for w in mess_ids}
    for rec in records:
        for entry in rec["mess"]:
            w = entry["id"]
            chain = chains[w]
            if entry["moved"]:
                seg = {"kind": "transit", "t_start": rec["t"],
                       "t_end": rec["t"] + 1, "toward": entry["dest_node"]}
                if chain and chain[-1]["kind"] == "transit" \
                        and chain[-1]["toward"] == seg["toward"] \
                        and chain[-1]["t_end"] == seg["t_start"]:
                    chain[-1]["t_end"] = seg["t_end"]
                else:
                    chain.append(seg)
            else:
                node = entry["location"].get("node")
                if chain and chain[-1]["kind"] == "stay" \
                        and chain[-1]["node"] == node \
                        and chain[-1]["t_end"] == rec["t"]:
                    chain[-1]["t_end"] = rec["t"] + 1
                else:
                    chain.append({"kind": "stay", "node": node,
                                  "microgrid": entry["staying_at"],
                                  "t_start": rec["t"],
                                  "t_end": rec["t"] + 1})
    return chains


def simulate(config, policy_act, seed, out_path):
    """Write a JSONL trace: one step record per line plus a summary."""
    env = RestorationEnv(config)
    total, records = baselines.run_episode(env, policy_act, seed=seed)
    with open(out_path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({"type": "step", **rec}) + "\n")
        fh.write(json.dumps({
            "type": "summary",
            "return": total,
            "trip_chains": trip_chains(records, env.mess_ids),
        }) + "\n")
    return total, records


def action_from_record(rec):
    from .env import Action
    return Action(tuple(e["kappa"] for e in rec["mess"]),
                  tuple(e["p_set"] for e in rec["mess"]),
                  tuple(m["p_dg_set"] for m in rec["microgrids"]))


def replay_trace(config, records, seed):
    """Re-ingest a trace's recorded actions under the trace's seed.

    Returns the replayed per-step rewards; a faithful environment
    reproduces the logged ones exactly.
    """
    env = RestorationEnv(config)
    env.reset(seed=seed)
    rewards = []
    for rec in records:
        _, r, _, _ = env.step(action_from_record(rec))
        rewards.append(r)
    return rewards


def oracle_report(config, checkpoint=None, log=print):
    """Exact solve plus optimality gaps of the reference policies."""
    env = RestorationEnv(config)
    result = baselines.value_iteration(env)
    optimum = result.optimal_value
    replayed = baselines.rollout_oracle_policy(env, result)

    gaps = {}
    random_returns = [baselines.random_policy(env, seed=s) for s in range(20)]
    gaps["random"] = optimum - float(np.mean(random_returns))
    greedy_return, _ = baselines.run_episode(env, baselines.greedy_policy,
                                             seed=0)
    gaps["greedy"] = optimum - greedy_return
    if checkpoint:
        agent = TD3Agent.load_checkpoint(checkpoint)
        if (agent.obs_dim != env.observation_dim
                or agent.act_dim != env.action_dim):
            raise CheckpointError(
                "checkpoint does not match the scenario's dimensions")
        gaps["checkpoint"] = optimum - greedy_agent_return(agent, env, seed=0)
    report = {
        "optimal_value": optimum,
        "replayed_optimal_return": replayed,
        "replay_consistency": abs(optimum - replayed),
        "state_count": result.state_count,
        "action_count": len(result.actions),
        "sweeps": result.sweeps,
        "gaps": gaps,
    }
    return report, result


# ----------------------------------------------------------------------
# argument wiring


def build_parser():
    parser = argparse.ArgumentParser(
        prog="messrl",
        description="Joint scheduling of mobile storage fleets and "
                    "microgrid dispatch for outage load restoration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent on a scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="run")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint", default=None,
                   help="resume from a training checkpoint")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint or baseline")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--policy", default=None,
                   help="baseline name: random | greedy | no_mess | idle")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--seed", type=int, default=EVALUATION_SEED_BASE)
    p.add_argument("--out", default=None, help="write the summary JSON here")

    p = sub.add_parser("simulate", help="emit a per-step JSON trace")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--policy", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="trace.jsonl")

    p = sub.add_parser("oracle", help="exact solve of a tiny scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", default=None,
                   help="export state values as JSON here")
    return parser


def _resolve_policy(args, env_dims_check=None):
    if args.checkpoint:
        agent = TD3Agent.load_checkpoint(args.checkpoint)
        if env_dims_check is not None:
            obs_dim, act_dim = env_dims_check
            if agent.obs_dim != obs_dim or agent.act_dim != act_dim:
                raise CheckpointError(
                    "checkpoint does not match the scenario's dimensions")
        return _policy_from_name("agent", agent)
    return _policy_from_name(args.policy or "greedy")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_scenario(args.config)
        if args.command == "train":
            train(config, args.out, episodes=args.episodes, seed=args.seed,
                  resume_from=args.checkpoint)
        elif args.command == "evaluate":
            env = RestorationEnv(config)
            act = _resolve_policy(
                args, (env.observation_dim, env.action_dim))
            summary = evaluate(config, act, args.episodes, args.seed)
            text = json.dumps(summary, indent=2)
            print(text)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text + "\n")
        elif args.command == "simulate":
            env = RestorationEnv(config)
            act = _resolve_policy(
                args, (env.observation_dim, env.action_dim))
            total, _ = simulate(config, act, args.seed, args.out)
            print(f"trace written to {args.out}; return {total:.6f}")
        elif args.command == "oracle":
            report, result = oracle_report(config, checkpoint=args.checkpoint)
            print(json.dumps(report, indent=2))
            if args.out:
                result.export_json(args.out)
    except (ConfigError, CheckpointError, baselines.OracleError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
