#include <cstdio>
#include <exception>

#include "CLI11.hpp"
#include "commands.hpp"
#include "tcp/errors.hpp"

using namespace tcp::cli;

int main(int argc, char** argv) {
  CLI::App app{"Temporal-attentive covariance pooling head: pooling, checks, training"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  PoolArgs pool;
  auto* pool_cmd = app.add_subcommand("pool", "Pool a clip file into a representation");
  pool_cmd->add_option("--input", pool.input, "Clip file (L x N x C)")->required();
  pool_cmd->add_option("--out", pool.out, "Output tensor file");
  pool_cmd->add_option("--variant", pool.variant, "gap, gcp or tcp")->capture_default_str();
  pool_cmd->add_option("--d", pool.dim, "Projected width");
  pool_cmd->add_option("--kappa", pool.kappa, "Temporal kernel size (odd)");
  pool_cmd->add_option("--K", pool.iterations, "Newton-Schulz iterations");
  pool_cmd->add_flag("--centered", pool.centered, "Subtract the per-frame mean");
  pool_cmd->add_flag("--no-attention", pool.no_attention, "Skip attentive calibration");
  pool_cmd->add_option("--params", pool.params, "Checkpoint to load parameters from");
  pool_cmd->add_option("--dtype", pool.dtype, "single or double")->capture_default_str();
  pool_cmd->add_option("--seed", pool.seed, "Parameter seed when no checkpoint is given")->capture_default_str();

  EquivalenceArgs eq;
  auto* eq_cmd = app.add_subcommand("equivalence", "Compare efficient and expanded temporal pooling");
  eq_cmd->add_option("--trials", eq.trials, "Random draws per grid point")->capture_default_str();
  eq_cmd->add_option("--seed", eq.seed)->capture_default_str();
  eq_cmd->add_option("--frames", eq.frames, "Grid of L")->delimiter(',');
  eq_cmd->add_option("--positions", eq.positions, "Grid of N")->delimiter(',');
  eq_cmd->add_option("--dims", eq.dims, "Grid of d")->delimiter(',');
  eq_cmd->add_option("--kappas", eq.kappas, "Grid of kernel sizes")->delimiter(',');
  eq_cmd->add_option("--dtype", eq.dtype, "double or single")->capture_default_str();
  eq_cmd->add_flag("--inject-fault", eq.inject_fault)->group("");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Central-difference gradient checks");
  gc_cmd->add_option("--scope", gc.scope, "primitive, attention, tconv, spectral, head or all")
      ->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed)->capture_default_str();

  SqrtBenchArgs sb;
  auto* sb_cmd = app.add_subcommand("sqrt-bench", "Newton-Schulz residuals against the eigen oracle");
  sb_cmd->add_option("--d", sb.dim)->capture_default_str();
  sb_cmd->add_option("--K", sb.iterations, "Iteration counts")->delimiter(',');
  sb_cmd->add_option("--cond", sb.cond, "Condition number")->capture_default_str();
  sb_cmd->add_option("--seed", sb.seed)->capture_default_str();

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train on a synthetic task; metrics as JSON lines");
  tr_cmd->add_option("--config", tr.config, "key = value config file")->required();
  tr_cmd->add_option("--checkpoint", tr.checkpoint, "Write final parameters here");
  tr_cmd->add_option("--seed", tr.seed, "Override every seed in the config");

  InfoArgs info;
  auto* info_cmd = app.add_subcommand("info", "Parameter and FLOP ledger");
  info_cmd->add_option("--params", info.params, "Checkpoint (defaults to the default config)");

  InitArgs init;
  auto* init_cmd = app.add_subcommand("init", "Write a freshly initialized checkpoint");
  init_cmd->add_option("--out", init.out)->required();
  init_cmd->add_option("--config", init.config, "key = value config file");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a random clip file");
  synth_cmd->add_option("--out", synth.out)->required();
  synth_cmd->add_option("--frames", synth.frames)->capture_default_str();
  synth_cmd->add_option("--positions", synth.positions)->capture_default_str();
  synth_cmd->add_option("--channels", synth.channels)->capture_default_str();
  synth_cmd->add_option("--height", synth.height);
  synth_cmd->add_option("--width", synth.width);
  synth_cmd->add_option("--label", synth.label);
  synth_cmd->add_option("--dtype", synth.dtype)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*pool_cmd) return run_pool(pool);
    if (*eq_cmd) return run_equivalence(eq);
    if (*gc_cmd) return run_gradcheck(gc);
    if (*sb_cmd) return run_sqrt_bench(sb);
    if (*tr_cmd) return run_train(tr);
    if (*info_cmd) return run_info(info);
    if (*init_cmd) return run_init(init);
    if (*synth_cmd) return run_synth(synth);
  } catch (const tcp::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFormatError;
  } catch (const tcp::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsageError;
  } catch (const tcp::DimensionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kCheckFailed;
  }
  return kUsageError;
}
