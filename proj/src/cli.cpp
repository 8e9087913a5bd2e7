#include "otreg/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "otreg/gradcheck.hpp"
#include "otreg/io.hpp"
#include "otreg/jsonw.hpp"
#include "otreg/loss.hpp"
#include "otreg/trainer.hpp"

namespace otreg {

namespace {

using Object = JsonValue::Object;
using Array = JsonValue::Array;

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// Wall time goes to the diagnostic stream only; report files must be
// byte-identical across runs.
void finish(const std::string& command, std::chrono::steady_clock::time_point t0) {
  std::cerr << command << ": wall_time_ms=" << elapsed_ms(t0) << "\n";
}

void write_report(const std::string& path, const Object& report) {
  write_text_atomic(path, JsonValue(report).dump() + "\n");
}

Object sinkhorn_echo(const SinkhornConfig& cfg) {
  Object o;
  o["epsilon"] = cfg.epsilon;
  o["max_iterations"] = cfg.max_iterations;
  o["tolerance"] = cfg.tolerance;
  o["log_domain"] = cfg.log_domain;
  return o;
}

Object eval_to_json(const EvalReport& r, const EvalDetail& d) {
  Object o;
  o["alignment_accuracy"] = r.alignment_accuracy;
  o["mean_transport_cost"] = r.mean_transport_cost;
  o["token_error_rate_after_compression"] = r.token_error_rate_after_compression;
  o["mean_compression_ratio"] = r.mean_compression_ratio;
  o["frames"] = d.frames;
  o["frames_correct"] = d.frames_correct;
  o["pad_frames"] = d.pad_frames;
  o["pad_frames_correct"] = d.pad_frames_correct;
  o["mean_l_spr"] = d.mean_l_spr;
  o["empty_compressions"] = d.empty_compressions;
  return o;
}

// Mean StepReport per epoch, one JSON line each.
std::string steps_to_jsonl(const std::vector<StepReport>& steps, int stage,
                           size_t steps_per_epoch) {
  std::string out;
  if (steps_per_epoch == 0) return out;
  for (size_t begin = 0; begin < steps.size(); begin += steps_per_epoch) {
    const size_t end = std::min(begin + steps_per_epoch, steps.size());
    StepReport mean;
    double iters = 0.0;
    for (size_t i = begin; i < end; ++i) {
      mean.l_ce += steps[i].l_ce;
      mean.l_cost += steps[i].l_cost;
      mean.l_spr += steps[i].l_spr;
      mean.l_ot += steps[i].l_ot;
      mean.l_total += steps[i].l_total;
      mean.marginal_error = std::max(mean.marginal_error, steps[i].marginal_error);
      iters += steps[i].sinkhorn_iterations;
    }
    const double n = static_cast<double>(end - begin);
    Object o;
    o["stage"] = stage;
    o["epoch"] = static_cast<std::int64_t>(begin / steps_per_epoch);
    o["steps"] = static_cast<std::int64_t>(end - begin);
    o["l_ce"] = mean.l_ce / n;
    o["l_cost"] = mean.l_cost / n;
    o["l_spr"] = mean.l_spr / n;
    o["l_ot"] = mean.l_ot / n;
    o["l_total"] = mean.l_total / n;
    o["mean_sinkhorn_iterations"] = iters / n;
    o["max_marginal_error"] = mean.marginal_error;
    out += JsonValue(o).dump() + "\n";
  }
  return out;
}

void write_params(const std::string& dir, const std::string& prefix, const AdapterParams& p) {
  write_emb(dir + "/" + prefix + "_w1.emb", p.w1);
  write_emb(dir + "/" + prefix + "_b1.emb", p.b1);
  write_emb(dir + "/" + prefix + "_w2.emb", p.w2);
  write_emb(dir + "/" + prefix + "_b2.emb", p.b2);
}

int cmd_align(const std::string& source_path, const std::string& target_path, double epsilon,
              int max_iters, double tol, double lambda_spr, const std::string& plan_out,
              const std::string& report_out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix source = read_matrix_auto(source_path);
  const Matrix target = read_matrix_auto(target_path);

  SinkhornConfig cfg;
  cfg.epsilon = epsilon;
  cfg.max_iterations = max_iters;
  cfg.tolerance = tol;
  const CostMatrix cost = build_cost(source, target);
  const TransportPlan plan = sinkhorn(cost, cfg);
  const OtLossBreakdown losses = ot_loss(plan.gamma, cost.values, lambda_spr);

  if (!plan_out.empty()) write_matrix_auto(plan_out, plan.gamma);

  Object report;
  report["command"] = "align";
  Object inputs;
  inputs["source"] = file_digest(source_path);
  inputs["target"] = file_digest(target_path);
  report["inputs"] = inputs;
  Object config = sinkhorn_echo(cfg);
  config["lambda_spr"] = lambda_spr;
  report["config"] = config;
  Object results;
  results["rows"] = plan.gamma.rows();
  results["cols"] = plan.gamma.cols();
  results["l_cost"] = losses.l_cost;
  results["l_spr"] = losses.l_spr;
  results["l_ot"] = losses.l_ot;
  results["iterations"] = plan.iterations_used;
  results["marginal_error"] = plan.marginal_error;
  report["results"] = results;
  if (!report_out.empty()) write_report(report_out, report);

  std::cout << "align: " << plan.gamma.rows() << "x" << plan.gamma.cols()
            << " plan, l_cost=" << losses.l_cost << " l_spr=" << losses.l_spr
            << " l_ot=" << losses.l_ot << " iterations=" << plan.iterations_used
            << " marginal_error=" << plan.marginal_error << "\n";
  finish("align", t0);
  return 0;
}

int cmd_compress(const std::string& input_path, const std::string& pad_path,
                 double merge_threshold, double drop_threshold, const std::string& out_path,
                 const std::string& report_out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix input = read_matrix_auto(input_path);
  const Matrix pad = read_matrix_auto(pad_path);
  if (pad.rows() != 1) throw io_error("compress: pad file must hold a single row");

  auto [compressed, rep] = ot_compress(input, pad.row(0), merge_threshold, drop_threshold);
  write_matrix_auto(out_path, compressed);

  Object report;
  report["command"] = "compress";
  Object inputs;
  inputs["input"] = file_digest(input_path);
  inputs["pad"] = file_digest(pad_path);
  report["inputs"] = inputs;
  Object config;
  config["merge_threshold"] = merge_threshold;
  config["drop_threshold"] = drop_threshold;
  report["config"] = config;
  Object results;
  results["input_length"] = rep.input_length;
  results["after_merge"] = rep.after_merge;
  results["after_drop"] = rep.after_drop;
  Array merged, dropped;
  for (int i : rep.merged_pair_indices) merged.push_back(i);
  for (int i : rep.dropped_indices) dropped.push_back(i);
  results["merged_pair_indices"] = merged;
  results["dropped_indices"] = dropped;
  results["empty_output"] = compressed.rows() == 0;
  report["results"] = results;
  if (!report_out.empty()) write_report(report_out, report);

  std::cout << "compress: " << rep.input_length << " -> " << rep.after_merge << " -> "
            << rep.after_drop << " rows";
  if (compressed.rows() == 0) std::cout << " (empty output)";
  std::cout << "\n";
  finish("compress", t0);
  return 0;
}

int cmd_unique(const std::string& input_path, const std::string& pad_path, double threshold,
               const std::string& out_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix input = read_matrix_auto(input_path);
  const Matrix pad = read_matrix_auto(pad_path);
  if (pad.rows() != 1) throw io_error("unique: pad file must hold a single row");

  const UniqueTargetSet set = unique_targets(input, pad.row(0), threshold);
  write_matrix_auto(out_path, set.embeddings);

  // Index map: kept row -> source row in [input; pad] (pad row = input rows).
  Matrix map(static_cast<int>(set.source_rows.size()), 2);
  for (size_t i = 0; i < set.source_rows.size(); ++i) {
    map(static_cast<int>(i), 0) = static_cast<double>(i);
    map(static_cast<int>(i), 1) = static_cast<double>(set.source_rows[i]);
  }
  write_csv_matrix(out_path + ".map.csv", map);

  std::cout << "unique: kept " << set.embeddings.rows() << " of " << input.rows() + 1
            << " rows, pad_row_index=" << set.pad_row_index << "\n";
  finish("unique", t0);
  return 0;
}

int cmd_heatmap(const std::string& source_path, const std::string& target_path,
                const std::string& out_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix source = read_matrix_auto(source_path);
  const Matrix target = read_matrix_auto(target_path);
  const Matrix dist = pairwise_distance_map(source, target);

  const std::string ext = std::filesystem::path(out_path).extension().string();
  if (ext == ".csv") {
    write_csv_matrix(out_path, dist);
  } else if (ext == ".pgm") {
    // Fixed [0,2] scale; pixel = round-half-up(255*d/2) so images compare
    // across runs.
    std::string buf = "P2\n" + std::to_string(dist.cols()) + " " + std::to_string(dist.rows()) +
                      "\n255\n";
    for (int i = 0; i < dist.rows(); ++i) {
      for (int j = 0; j < dist.cols(); ++j) {
        int pixel = static_cast<int>(std::floor(255.0 * dist(i, j) / 2.0 + 0.5));
        pixel = std::min(255, std::max(0, pixel));
        if (j) buf.push_back(' ');
        buf += std::to_string(pixel);
      }
      buf.push_back('\n');
    }
    write_text_atomic(out_path, buf);
  } else {
    throw io_error("heatmap: output extension must be .pgm or .csv, got '" + ext + "'");
  }
  std::cout << "heatmap: " << dist.rows() << "x" << dist.cols() << " -> " << out_path << "\n";
  finish("heatmap", t0);
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = parse_run_config(config_path);
  std::filesystem::create_directories(out_dir);

  const Corpus corpus = make_corpus(cfg.corpus);
  const int d_in = cfg.corpus.d_s * cfg.train.k;
  AdapterParams params = init_adapter(d_in, cfg.train.d_h, cfg.corpus.d_l, cfg.train.seed);

  const std::vector<StepReport> s1 = stage1_train(corpus, params, cfg.train);
  write_text_atomic(out_dir + "/stage1_steps.jsonl",
                    steps_to_jsonl(s1, 1, corpus.samples.size()));
  write_params(out_dir, "stage1", params);
  EvalDetail det1;
  const EvalReport eval1 = evaluate(corpus, params, corpus.table, cfg.train, &det1);
  write_report(out_dir + "/stage1_eval.json", eval_to_json(eval1, det1));
  std::cout << "stage1: accuracy=" << eval1.alignment_accuracy
            << " mean_transport_cost=" << eval1.mean_transport_cost << "\n";

  if (cfg.train.stage2_epochs > 0) {
    const std::vector<StepReport> s2 = stage2_train(corpus, params, cfg.train);
    write_text_atomic(out_dir + "/stage2_steps.jsonl",
                      steps_to_jsonl(s2, 2, corpus.samples.size()));
    write_params(out_dir, "stage2", params);
    EvalDetail det2;
    const EvalReport eval2 = evaluate(corpus, params, corpus.table, cfg.train, &det2);
    write_report(out_dir + "/stage2_eval.json", eval_to_json(eval2, det2));
    std::cout << "stage2: accuracy=" << eval2.alignment_accuracy
              << " mean_transport_cost=" << eval2.mean_transport_cost << "\n";
  }
  finish("train", t0);
  return 0;
}

// Synthetic check instance: vocabulary of n_g unit rows (pad last), raw
// frames with recorded labels, random warm-ish adapter weights.
struct CheckInstance {
  UtteranceSample sample;
  EmbeddingTable table;
  AdapterParams params;
  TrainConfig cfg;
};

CheckInstance make_check_instance(int n_a, int n_g, Rng& rng) {
  constexpr int kDs = 3, kDh = 5, kDl = 4, kK = 2;
  CheckInstance inst;
  inst.table = make_embedding_table(rng.next(), n_g, kDl);

  inst.cfg.k = kK;
  inst.cfg.d_h = kDh;
  // Fixed iteration count keeps the unrolled solve smooth for differencing.
  inst.cfg.sinkhorn.epsilon = 0.1;
  inst.cfg.sinkhorn.max_iterations = 60;
  inst.cfg.sinkhorn.tolerance = 0.0;

  inst.sample.tokens.clear();
  for (int j = 0; j < n_g - 1; ++j) inst.sample.tokens.push_back(j);
  inst.sample.raw_speech = Matrix(n_a * kK, kDs);
  for (auto& v : inst.sample.raw_speech.data()) v = rng.symmetric();
  inst.sample.frame_to_token.resize(static_cast<size_t>(n_a) * kK);
  for (auto& t : inst.sample.frame_to_token) t = rng.uniform_int(0, n_g - 1);
  // Every non-pad label must appear in tokens; tokens list covers all ids.

  inst.params = init_adapter(kDs * kK, kDh, kDl, rng.next());
  return inst;
}

int cmd_gradcheck(const std::string& sizes_arg, int trials, std::uint64_t seed,
                  bool inject_fault) {
  const auto t0 = std::chrono::steady_clock::now();
  if (trials == 0) {
    std::cerr << "gradcheck: trials=0, nothing checked (vacuous pass)\n";
    return 0;
  }
  std::vector<std::pair<int, int>> sizes;
  {
    std::string item;
    std::istringstream ss(sizes_arg);
    while (std::getline(ss, item, ',')) {
      const size_t x = item.find('x');
      if (x == std::string::npos)
        throw io_error("gradcheck: --sizes expects entries like 6x4, got '" + item + "'");
      sizes.emplace_back(std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1)));
    }
    if (sizes.empty()) throw io_error("gradcheck: empty --sizes");
  }

  Rng rng(seed);
  double worst = 0.0;
  std::string worst_desc = "none";
  for (const auto& [n_a, n_g] : sizes) {
    if (n_a < 1 || n_g < 2) throw io_error("gradcheck: sizes must be at least 1x2");
    for (int trial = 0; trial < trials; ++trial) {
      CheckInstance inst = make_check_instance(n_a, n_g, rng);
      int calls = 0;
      auto build = [&](Tape& tape, std::span<const Var> leaves) -> Var {
        AdapterVars vars{leaves[0], leaves[1], leaves[2], leaves[3]};
        Var total = stage2_graph(tape, inst.sample, vars, inst.table, inst.cfg).total;
        // Test hook: corrupt the recorded graph (analytic pass only).
        if (inject_fault && calls++ == 0) total = tape.scale(total, 1.0 + 1e-3);
        return total;
      };
      const Matrix params[] = {inst.params.w1, inst.params.b1, inst.params.w2, inst.params.b2};
      const double err = grad_check(build, params, 1e-5);
      if (err > worst) {
        worst = err;
        worst_desc = std::to_string(n_a) + "x" + std::to_string(n_g) + " trial " +
                     std::to_string(trial);
      }
    }
  }

  std::cout << "gradcheck: worst relative error " << worst << " at " << worst_desc << "\n";
  finish("gradcheck", t0);
  if (worst >= 1e-4) {
    std::cerr << "gradcheck: FAILED (threshold 1e-4)\n";
    return 1;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"entropic optimal-transport alignment, compression and training toolkit"};
  app.require_subcommand(1);

  // align
  std::string al_source, al_target, al_plan_out, al_report_out;
  double al_epsilon = 0.1, al_tol = 1e-8, al_lambda_spr = 0.1;
  int al_max_iters = 500;
  auto* align = app.add_subcommand("align", "solve the transport plan between two matrices");
  align->add_option("--source", al_source, "source matrix (.emb or .csv)")->required();
  align->add_option("--target", al_target, "target matrix (.emb or .csv)")->required();
  align->add_option("--epsilon", al_epsilon, "entropy weight");
  align->add_option("--max-iters", al_max_iters, "iteration cap");
  align->add_option("--tol", al_tol, "marginal tolerance");
  align->add_option("--lambda-spr", al_lambda_spr, "sparsity weight in the reported loss");
  align->add_option("--plan-out", al_plan_out, "write the plan here (.emb or .csv)");
  align->add_option("--report-out", al_report_out, "write the JSON report here");

  // compress
  std::string cp_input, cp_pad, cp_out, cp_report_out;
  double cp_merge = 0.9, cp_drop = 0.9;
  auto* compress = app.add_subcommand("compress", "merge near-duplicate neighbors, drop pad-like rows");
  compress->add_option("--input", cp_input, "input matrix")->required();
  compress->add_option("--pad", cp_pad, "pad embedding (1-row matrix)")->required();
  compress->add_option("--merge-threshold", cp_merge, "pair merge similarity threshold");
  compress->add_option("--drop-threshold", cp_drop, "pad drop similarity threshold");
  compress->add_option("--out", cp_out, "output matrix")->required();
  compress->add_option("--report-out", cp_report_out, "write the JSON report here");

  // unique
  std::string un_input, un_pad, un_out;
  double un_threshold = kUniquenessThreshold;
  auto* unique = app.add_subcommand("unique", "extract unique rows plus the pad embedding");
  unique->add_option("--input", un_input, "input matrix")->required();
  unique->add_option("--pad", un_pad, "pad embedding (1-row matrix)")->required();
  unique->add_option("--threshold", un_threshold, "uniqueness similarity threshold");
  unique->add_option("--out", un_out, "output matrix (index map at <out>.map.csv)")->required();

  // train
  std::string tr_config, tr_out_dir;
  auto* train = app.add_subcommand("train", "two-stage training on a synthetic corpus");
  train->add_option("--config", tr_config, "key=value config file")->required();
  train->add_option("--out-dir", tr_out_dir, "output directory")->required();

  // heatmap
  std::string hm_source, hm_target, hm_out;
  auto* heatmap = app.add_subcommand("heatmap", "pairwise distance map as PGM or CSV");
  heatmap->add_option("--source", hm_source, "source matrix")->required();
  heatmap->add_option("--target", hm_target, "target matrix")->required();
  heatmap->add_option("--out", hm_out, "output file (.pgm or .csv)")->required();

  // gradcheck
  std::string gc_sizes = "4x3,6x4";
  int gc_trials = 3;
  std::uint64_t gc_seed = 1;
  bool gc_inject = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of all loss paths");
  gradcheck->add_option("--sizes", gc_sizes, "comma list of <frames>x<targets> sizes");
  gradcheck->add_option("--trials", gc_trials, "trials per size");
  gradcheck->add_option("--seed", gc_seed, "instance seed");
  gradcheck->add_flag("--inject-fault", gc_inject)->group("");  // test hook, hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (align->parsed())
      return cmd_align(al_source, al_target, al_epsilon, al_max_iters, al_tol, al_lambda_spr,
                       al_plan_out, al_report_out);
    if (compress->parsed())
      return cmd_compress(cp_input, cp_pad, cp_merge, cp_drop, cp_out, cp_report_out);
    if (unique->parsed()) return cmd_unique(un_input, un_pad, un_threshold, un_out);
    if (train->parsed()) return cmd_train(tr_config, tr_out_dir);
    if (heatmap->parsed()) return cmd_heatmap(hm_source, hm_target, hm_out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_sizes, gc_trials, gc_seed, gc_inject);
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace otreg
