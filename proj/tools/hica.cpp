// hica: command-line entry point.
//
//   hica charlm      --config cfg.json [--out DIR] [--seed N] [--workers N] [--ticks N]
//                    [--resume CKPT] [--checkpoint-at N]
//   hica skinner     --config cfg.json [--out DIR] [--seed N] [--no-preplay] [--no-modulation]
//                    [--phase2-only CKPT] [--agent hica|random|oracle] [--seeds N]
//   hica gradcheck   [--corrupt-gradient]
//   hica replay-demo --config cfg.json [--out DIR] [--seed N]
//
// HICA_LOG_LEVEL selects error, info (default) or debug.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hica/checkpoint.hpp"
#include "hica/charlm.hpp"
#include "hica/config.hpp"
#include "hica/experiments.hpp"
#include "hica/skinner.hpp"

namespace fs = std::filesystem;
using namespace hica;

namespace {

void init_logging() {
  const char* env = std::getenv("HICA_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error")
    spdlog::set_level(spdlog::level::err);
  else if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else if (level == "info")
    spdlog::set_level(spdlog::level::info);
  else
    throw Error("HICA_LOG_LEVEL must be error, info or debug, got '" + level + "'");
  spdlog::set_pattern("[%l] %v");
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_config(const Common& c, std::string& text) {
  if (c.config.empty()) throw ConfigError("<root>", "--config is required");
  text = read_file(c.config);
  RunConfig cfg = parse_config_text(text);
  if (c.seed) {
    cfg.seed = *c.seed;
    Json j = Json::parse(text);
    j["seed"] = *c.seed;
    text = j.dump(2);
  }
  if (!c.out.empty()) cfg.out_dir = c.out;
  fs::create_directories(cfg.out_dir);
  return cfg;
}

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// ---------------------------------------------------------------- charlm

struct CharLmArgs {
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> ticks;
  std::string resume;
  std::optional<std::uint64_t> checkpoint_at;
};

int cmd_charlm(const Common& common, const CharLmArgs& args) {
  std::string text;
  RunConfig cfg = load_config(common, text);
  if (!cfg.charlm) throw ConfigError("charlm", "missing required section");
  CharLmState st;
  if (!args.resume.empty()) {
    auto loaded = load_charlm_checkpoint(read_file(args.resume));
    text = loaded.config_text;
    st = std::move(loaded.state);
    spdlog::info("resumed from {} at tick {}", args.resume, st.tick);
  } else {
    st = make_charlm_state(cfg, read_file(cfg.charlm->corpus));
  }
  const std::uint64_t ticks = args.ticks.value_or(cfg.charlm->ticks);
  CharLmOptions opt{args.workers.value_or(cfg.charlm->workers), cfg.charlm->mailbox};
  const fs::path csv_path = fs::path(cfg.out_dir) / "charlm_metrics.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw Error("cannot write " + csv_path.string());
  csv << st.meter.header() << '\n';
  spdlog::info("charlm: {} nodes, alphabet {}, {} ticks, {} worker(s)", st.graph.size(), st.stream.codec().size(),
               ticks, opt.workers);
  std::uint64_t done = 0;
  if (args.checkpoint_at && *args.checkpoint_at <= ticks) {
    charlm_run(st, *args.checkpoint_at, &csv, opt);
    done = *args.checkpoint_at;
    const fs::path p = fs::path(cfg.out_dir) / ("charlm_tick" + std::to_string(st.tick) + ".ckpt");
    write_file(p.string(), charlm_checkpoint_bytes(text, st));
    spdlog::info("checkpoint written to {}", p.string());
  }
  const std::uint64_t log_every = std::max<std::uint64_t>(st.meter.interval(), 10000);
  while (done < ticks) {
    const std::uint64_t chunk = std::min(log_every, ticks - done);
    auto rows = charlm_run(st, chunk, &csv, opt);
    done += chunk;
    if (!rows.empty()) spdlog::info("tick {}: {}", st.tick, rows.back());
  }
  const fs::path final_path = fs::path(cfg.out_dir) / "charlm_final.ckpt";
  write_file(final_path.string(), charlm_checkpoint_bytes(text, st));
  spdlog::info("metrics in {}, checkpoint in {}", csv_path.string(), final_path.string());
  return 0;
}

// ---------------------------------------------------------------- skinner

struct SkinnerArgs {
  bool no_preplay = false;
  bool no_modulation = false;
  std::string phase2_only;
  std::string agent = "hica";
  std::optional<std::size_t> seeds;
};

int cmd_skinner(const Common& common, const SkinnerArgs& args) {
  std::string text;
  RunConfig cfg = load_config(common, text);
  if (!cfg.skinner) throw ConfigError("skinner", "missing required section");
  const SkinnerConfig& sk = *cfg.skinner;
  if (args.agent != "hica" && args.agent != "random" && args.agent != "oracle")
    throw Error("--agent must be hica, random or oracle");
  std::optional<InstinctBundle> shared;
  if (!args.phase2_only.empty()) {
    if (!fs::exists(args.phase2_only)) throw Error("--phase2-only: checkpoint not found: " + args.phase2_only);
    shared = load_instinct_checkpoint(read_file(args.phase2_only));
  }
  const fs::path trials_path = fs::path(cfg.out_dir) / "skinner_trials.csv";
  const fs::path summary_path = fs::path(cfg.out_dir) / "skinner_summary.csv";
  std::ofstream trials(trials_path, std::ios::trunc), summary(summary_path, std::ios::trunc);
  if (!trials || !summary) throw Error("cannot write skinner CSVs under " + cfg.out_dir);
  trials << "seed,agent,trial,light,action,outcome,correct,mode,preplay,plan_accepted,plan_value\n";
  summary << "seed,agent,preplay,modulation,phase1_mean_reward,phase1_contact_rate,trials_run,trials_to_criterion\n";
  const std::size_t seeds = args.seeds.value_or(sk.seeds);
  for (std::size_t i = 0; i < seeds; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    InstinctBundle bundle;
    double p1_reward = 0.0, p1_contact = 0.0;
    if (shared) {
      bundle = *shared;
    } else {
      auto [b, rep] = skinner_phase1(sk.phase1, seed);
      bundle = std::move(b);
      p1_reward = rep.mean_reward_last50;
      p1_contact = rep.contact_rate_last50;
      spdlog::info("seed {} phase 1: mean reward {:.3f}, contact rate {:.3f}{}", seed, p1_reward, p1_contact,
                   rep.competent ? "" : " (below competence)");
      const fs::path p = fs::path(cfg.out_dir) / ("instinct_seed" + std::to_string(seed) + ".ckpt");
      write_file(p.string(), instinct_checkpoint_bytes(text, bundle));
    }
    std::unique_ptr<Phase2Agent> agent;
    if (args.agent == "random") {
      agent = std::make_unique<RandomAgent>(derive_seed(seed, 41));
    } else if (args.agent == "oracle") {
      agent = std::make_unique<OracleAgent>();
    } else {
      HicaAgentConfig ac = sk.agent;
      ac.preplay = !args.no_preplay;
      ac.modulation = !args.no_modulation;
      agent = std::make_unique<HicaAgent>(ac, seed);
    }
    const Phase2Result res = skinner_phase2(sk.phase2, bundle, *agent, seed);
    for (const auto& t : res.trials)
      trials << seed << ',' << agent->name() << ',' << t.index << ',' << light_name(t.light) << ','
             << (t.action == TrialAction::pulled ? "pulled" : "withheld") << ',' << t.outcome << ','
             << (t.correct ? 1 : 0) << ',' << (t.mode.empty() ? "-" : t.mode) << ',' << (t.preplay_ran ? 1 : 0)
             << ',' << (t.plan_accepted ? 1 : 0) << ',' << fmt6(t.plan_value) << '\n';
    summary << seed << ',' << agent->name() << ',' << (args.no_preplay ? 0 : 1) << ','
            << (args.no_modulation ? 0 : 1) << ',' << fmt6(p1_reward) << ',' << fmt6(p1_contact) << ','
            << res.trials.size() << ','
            << (res.trials_to_criterion ? std::to_string(*res.trials_to_criterion) : "not_reached") << '\n';
    spdlog::info("seed {} phase 2 ({}): trials_to_criterion {}", seed, agent->name(),
                 res.trials_to_criterion ? std::to_string(*res.trials_to_criterion) : "not_reached");
  }
  spdlog::info("trial log {}, summary {}", trials_path.string(), summary_path.string());
  return 0;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(bool corrupt) {
  const std::vector<double> eps = {1e-5, 1e-4, 1e-6};
  const GradCheckSuite suite = gradcheck_suite(10, eps, corrupt);
  for (double e : eps) {
    double worst = 0.0;
    for (const auto& en : suite.entries)
      if (en.epsilon == e) worst = std::max(worst, en.result.max_error);
    spdlog::info("epsilon {:.0e}: worst relative error {:.3e}", e, worst);
  }
  std::cout << "worst relative error " << suite.worst << " (" << suite.worst_unit << ", epsilon 1e-05, "
            << suite.entries.size() / eps.size() << " checks)\n";
  if (suite.worst >= 1e-4) {
    std::cout << "FAIL: gradient check above 1e-4\n";
    return 1;
  }
  std::cout << "OK\n";
  return 0;
}

// ---------------------------------------------------------------- replay-demo

int cmd_replay_demo(const Common& common) {
  std::string text;
  RunConfig cfg = load_config(common, text);
  if (!cfg.replay_demo) throw ConfigError("replay_demo", "missing required section");
  const fs::path path = fs::path(cfg.out_dir) / "replay_demo.csv";
  std::ofstream csv(path, std::ios::trunc);
  csv << "seed,pre_accuracy,post_accuracy,first_pass_loss,final_pass_loss\n";
  for (std::uint64_t i = 0; i < 10; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    const auto r = replay_demo(seed, *cfg.replay_demo);
    csv << seed << ',' << fmt6(r.pre_accuracy) << ',' << fmt6(r.post_accuracy) << ','
        << fmt6(r.trace.pass_loss.front()) << ',' << fmt6(r.trace.pass_loss.back()) << '\n';
    spdlog::info("seed {}: accuracy {:.3f} -> {:.3f}", seed, r.pre_accuracy, r.post_accuracy);
  }
  spdlog::info("results in {}", path.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HICA cognitive architecture experiments"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", common.config, "JSON run configuration");
    if (need_config) c->required();
    sub->add_option("--seed", common.seed, "override the configured seed");
    sub->add_option("--out", common.out, "output directory (overrides out_dir)");
  };

  CharLmArgs cl;
  auto* charlm = app.add_subcommand("charlm", "character-level language modeling run");
  add_common(charlm, true);
  charlm->add_option("--workers", cl.workers, "worker threads for the graph (1 = deterministic)");
  charlm->add_option("--ticks", cl.ticks, "override the tick budget");
  charlm->add_option("--resume", cl.resume, "resume from a charlm checkpoint");
  charlm->add_option("--checkpoint-at", cl.checkpoint_at, "also write a checkpoint after this many ticks");

  SkinnerArgs sa;
  auto* skinner = app.add_subcommand("skinner", "two-phase Skinner box protocol");
  add_common(skinner, true);
  skinner->add_flag("--no-preplay", sa.no_preplay, "ablate forward simulation");
  skinner->add_flag("--no-modulation", sa.no_modulation, "pin plasticity gain at g_min");
  skinner->add_option("--phase2-only", sa.phase2_only, "skip phase 1, load this instinct checkpoint");
  skinner->add_option("--agent", sa.agent, "hica, random or oracle");
  skinner->add_option("--seeds", sa.seeds, "number of consecutive seeds (overrides config)");

  bool corrupt = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks for all unit types");
  gradcheck->add_flag("--corrupt-gradient", corrupt, "test hook: perturb analytic gradients");

  auto* replay = app.add_subcommand("replay-demo", "one-episode replay consolidation experiment");
  add_common(replay, true);

  CLI11_PARSE(app, argc, argv);
  try {
    init_logging();
    if (*charlm) return cmd_charlm(common, cl);
    if (*skinner) return cmd_skinner(common, sa);
    if (*gradcheck) return cmd_gradcheck(corrupt);
    if (*replay) return cmd_replay_demo(common);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
