#pragma once

// Subcommand implementations behind tools/drivevqa. Each run_* validates its
// inputs, does the work and returns the process exit code:
//
//   0 ok, 1 I/O failure, 2 schema/format/usage error,
//   3 some stitch frames failed, 4 gradient check above tolerance.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "drivevqa/compose.hpp"
#include "drivevqa/ingest.hpp"
#include "drivevqa/judge_http.hpp"
#include "drivevqa/locloss.hpp"
#include "drivevqa/metrics.hpp"

namespace drivevqa::cli {

enum ExitCode : int {
  kOk = 0,
  kIoError = 1,
  kDataError = 2,
  kFrameFailures = 3,
  kGradientCheckFailed = 4,
};

inline constexpr double kGradientTolerance = 1e-4;

/// `turn` counts across every record of the frame, so compressed and
/// uncompressed output share ids.
inline std::string question_id(const QARecord& r, std::size_t turn) {
  return r.scene_id + ":" + r.frame_id + ":" + std::to_string(turn);
}

// ---------------------------------------------------------------------------
// convert
// ---------------------------------------------------------------------------

struct ConvertConfig {
  std::string adapter;
  std::filesystem::path input;
  std::filesystem::path output;
  std::optional<std::filesystem::path> summary;     // default: <output>.summary.json
  std::optional<std::filesystem::path> references;  // eval reference file
  std::optional<std::filesystem::path> samples;     // training samples
  std::optional<std::filesystem::path> templates;
  std::string grounding_source = "nuscenes";
  bool compress = false;
  CoordinatePolicy policy = CoordinatePolicy::KeepOriginal;
  StitchLayout layout;
  SamplingConfig sampling;
};

inline int run_convert(const ConvertConfig& cfg, std::ostream& log = std::cerr) {
  if (!is_known_adapter(cfg.adapter)) {
    log << "error: unknown adapter '" << cfg.adapter << "'\n";
    return kDataError;
  }
  AdapterOptions opts;
  opts.layout = cfg.layout;
  opts.grounding_source = cfg.grounding_source;

  std::vector<QARecord> records;
  std::optional<std::string> schema_error;
  try {
    if (cfg.templates) opts.templates = GroundingTemplates::from_json(read_json_file(*cfg.templates));
    run_adapter(cfg.adapter, cfg.input, [&](QARecord r) {
      if (cfg.sampling.keep(r)) records.push_back(std::move(r));
    }, opts);
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const SchemaError& e) {
    schema_error = e.what();
  } catch (const std::invalid_argument& e) {
    schema_error = e.what();
  }

  for (auto& r : records) {
    for (auto& t : r.tags) t.space = cfg.layout.space_for(t.camera, t.space.kind);
  }
  if (cfg.compress) records = compress_frame_qas(records);

  std::vector<TagDiagnostic> diagnostics;
  for (auto& r : records) r = apply_policy(r, cfg.policy, cfg.layout, &diagnostics);
  for (const auto& d : diagnostics) log << "warning: " << d.message << "\n";

  std::ofstream out(cfg.output, std::ios::binary | std::ios::trunc);
  if (!out) {
    log << "error: cannot write '" << cfg.output.string() << "'\n";
    return kIoError;
  }
  for (const auto& r : records) write_jsonl_line(out, record_to_json(r));

  if (cfg.references) {
    std::ofstream refs(*cfg.references, std::ios::binary | std::ios::trunc);
    if (!refs) {
      log << "error: cannot write '" << cfg.references->string() << "'\n";
      return kIoError;
    }
    std::map<std::pair<std::string, std::string>, std::size_t> next_turn;
    for (const auto& r : records) {
      std::size_t& base = next_turn[{r.scene_id, r.frame_id}];
      for (std::size_t i = 0; i < r.turns.size(); ++i) {
        ReferenceEntry e{question_id(r, base + i), {r.turns[i].answer}, std::string(to_string(r.category)),
                         is_closed_form_answer(r.turns[i].answer), r.turns[i].question};
        write_jsonl_line(refs, reference_to_json(e));
      }
      base += r.turns.size();
    }
  }

  if (cfg.samples) {
    std::ofstream samples(*cfg.samples, std::ios::binary | std::ios::trunc);
    if (!samples) {
      log << "error: cannot write '" << cfg.samples->string() << "'\n";
      return kIoError;
    }
    // Records already carry the target coordinates.
    for (const auto& r : records) {
      write_jsonl_line(samples, sample_to_json(build_training_sample(r, CoordinatePolicy::KeepOriginal, cfg.layout)));
    }
  }

  json summary = summary_to_json(summarize_dataset(records));
  summary["adapter"] = cfg.adapter;
  summary["policy"] = to_string(cfg.policy);
  summary["compressed"] = cfg.compress;
  summary["transform_warnings"] = diagnostics.size();
  if (schema_error) summary["schema_error"] = *schema_error;
  const auto summary_path = cfg.summary.value_or(std::filesystem::path(cfg.output.string() + ".summary.json"));
  std::ofstream sf(summary_path, std::ios::binary | std::ios::trunc);
  if (!sf) {
    log << "error: cannot write '" << summary_path.string() << "'\n";
    return kIoError;
  }
  sf << summary.dump(2) << "\n";
  log << summary.dump() << "\n";

  if (schema_error) {
    log << "error: " << *schema_error << "\n";
    return kDataError;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// stitch
// ---------------------------------------------------------------------------

struct StitchConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  StitchLayout layout;
  int jobs = 1;
};

inline bool safe_frame_id(const std::string& id) {
  return !id.empty() && id != "." && id != ".." && id.find_first_of("/\\") == std::string::npos;
}

inline int run_stitch(const StitchConfig& cfg, std::ostream& log = std::cerr) {
  std::vector<FrameManifestEntry> frames;
  try {
    frames = read_frame_manifest(cfg.manifest);
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kDataError;
  }
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) {
    log << "error: cannot create '" << cfg.output_dir.string() << "': " << ec.message() << "\n";
    return kIoError;
  }

  std::vector<std::optional<std::string>> failures(frames.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < frames.size(); i = next++) {
      const auto& f = frames[i];
      try {
        if (!safe_frame_id(f.frame_id)) throw std::invalid_argument("unsafe frame_id");
        write_png(cfg.output_dir / (f.frame_id + ".png"), compose_frame(f, cfg.layout));
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(std::max(1, cfg.jobs), std::max<std::size_t>(1, frames.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::size_t failed = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (failures[i]) {
      ++failed;
      log << "frame " << frames[i].frame_id << ": failed: " << *failures[i] << "\n";
    } else {
      log << "frame " << frames[i].frame_id << ": ok\n";
    }
  }
  log << "stitched " << frames.size() - failed << "/" << frames.size() << " frames\n";
  return failed > 0 ? kFrameFailures : kOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

enum class JudgeMode : std::uint8_t { Stub, Live, Off };

struct EvalRunConfig {
  std::filesystem::path predictions;
  std::filesystem::path references;
  std::optional<std::filesystem::path> output;
  EvalConfig metrics;
  JudgeMode judge = JudgeMode::Stub;
  std::uint64_t seed = 0;
};

inline json eval_config_json(const EvalRunConfig& cfg) {
  const auto& m = cfg.metrics;
  return json{{"metrics",
               {{"accuracy", m.accuracy},
                {"bleu", m.bleu},
                {"rouge_l", m.rouge_l},
                {"cider", m.cider},
                {"match", m.match},
                {"judge", m.judge}}},
              {"judge_mode", cfg.judge == JudgeMode::Live ? "live" : cfg.judge == JudgeMode::Stub ? "stub" : "off"},
              {"seed", cfg.seed},
              {"bleu_smoothing", m.bleu_options.smoothing == BleuSmoothing::None ? "none" : "epsilon"},
              {"rouge_beta", m.rouge_beta},
              {"cider_scale", m.cider_options.scale},
              {"match_threshold_px", m.match_options.threshold_px},
              {"judge_retries", m.judge_options.max_retries}};
}

/// `judge_override` replaces the configured client (used by tests).
inline int run_eval(const EvalRunConfig& cfg, std::ostream& out = std::cout, std::ostream& log = std::cerr,
                    JudgeClient* judge_override = nullptr) {
  JoinedCorpus corpus;
  try {
    corpus = join_prediction_files(cfg.predictions, cfg.references);
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kDataError;
  }
  for (const auto& d : corpus.diagnostics) log << "warning: " << d << "\n";
  if (corpus.pairs.empty()) {
    log << "error: predictions and references share no question_id\n";
    return kDataError;
  }

  EvalConfig metrics = cfg.metrics;
  std::unique_ptr<JudgeClient> client;
  JudgeClient* judge = judge_override;
  if (cfg.judge == JudgeMode::Off) {
    metrics.judge = false;
  } else if (judge == nullptr && metrics.judge) {
    if (cfg.judge == JudgeMode::Stub) {
      client = std::make_unique<StubJudge>(cfg.seed);
    } else {
      try {
        client = std::make_unique<HttpJudge>(HttpJudgeConfig::from_env());
      } catch (const JudgeUnavailable& e) {
        log << "warning: " << e.what() << "\n";
      }
    }
    judge = client.get();
  }

  EvalResult result;
  try {
    result = evaluate_corpus(corpus.pairs, metrics, judge);
  } catch (const MetricError& e) {
    log << "error: " << e.what() << "\n";
    return kDataError;
  }

  std::size_t closed = 0;
  for (const auto& p : corpus.pairs) closed += p.closed_form ? 1 : 0;
  std::vector<std::string> diagnostics = corpus.diagnostics;
  diagnostics.insert(diagnostics.end(), result.diagnostics.begin(), result.diagnostics.end());
  const json report{{"schema_version", 1},
                    {"metrics", report_to_json(result.report)},
                    {"weights", metrics.weights.to_json()},
                    {"config", eval_config_json(cfg)},
                    {"counts", {{"pairs", corpus.pairs.size()}, {"closed_form", closed}}},
                    {"diagnostics", diagnostics},
                    {"pairs", result.per_pair}};
  const std::string text = report.dump(2) + "\n";
  out << text;
  if (cfg.output) {
    std::ofstream f(*cfg.output, std::ios::binary | std::ios::trunc);
    if (!f) {
      log << "error: cannot write '" << cfg.output->string() << "'\n";
      return kIoError;
    }
    f << text;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// losscheck
// ---------------------------------------------------------------------------

struct LosscheckConfig {
  std::filesystem::path logits;
  std::filesystem::path alignment;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  GradCheckOptions check;
  std::optional<std::filesystem::path> output;
  bool include_grad = false;
};

inline int run_losscheck(const LosscheckConfig& cfg, std::ostream& out = std::cout, std::ostream& log = std::cerr) {
  LogitsTensor logits;
  AlignmentFile align;
  LossBreakdown breakdown;
  GradCheckResult check;
  try {
    logits = read_logits_file(cfg.logits);
    align = alignment_from_json(read_json_file(cfg.alignment), cfg.alignment.filename().string());
    const auto mask = build_location_mask(align.alignment, align.numeric_spans);
    breakdown = total_loss(logits, align.alignment.token_ids, mask, cfg.lambda1, cfg.lambda2, cfg.check.reduction);
    check = finite_difference_check(logits, align.alignment.token_ids, mask, cfg.lambda1, cfg.lambda2, cfg.check);
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kDataError;
  }
  const bool passed = check.max_relative_error <= kGradientTolerance;
  json report = breakdown_to_json(breakdown, cfg.include_grad);
  report["shape"] = {logits.positions, logits.vocab};
  report["reduction"] = cfg.check.reduction == Reduction::Mean ? "mean" : "sum";
  report["gradient_check"] = {{"max_relative_error", check.max_relative_error},
                              {"samples", check.samples},
                              {"epsilon", cfg.check.epsilon},
                              {"seed", cfg.check.seed},
                              {"tolerance", kGradientTolerance},
                              {"passed", passed}};
  const std::string text = report.dump(2) + "\n";
  out << text;
  if (cfg.output) {
    std::ofstream f(*cfg.output, std::ios::binary | std::ios::trunc);
    if (!f) {
      log << "error: cannot write '" << cfg.output->string() << "'\n";
      return kIoError;
    }
    f << text;
  }
  return passed ? kOk : kGradientCheckFailed;
}

}  // namespace drivevqa::cli
