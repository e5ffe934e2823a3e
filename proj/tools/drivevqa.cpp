// drivevqa: convert datasets, stitch frames, evaluate predictions, check the
// location-loss gradient.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drivevqa/cli.hpp"

namespace {

using namespace drivevqa;

void apply_native_dims(StitchLayout& layout, const std::vector<std::string>& specs) {
  // "WxH" for every camera, or "CAM_NAME=WxH" for one.
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      layout.set_all_native_dims(parse_native_dims(spec));
    } else {
      layout.set_native_dims(normalize_camera_name(spec.substr(0, eq)), parse_native_dims(spec.substr(eq + 1)));
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view driving VQA data pipeline and evaluation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  int jobs = 1;
  app.add_option("--seed", seed, "Seed for the stub judge, sampling and gradient-check draws");
  app.add_option("--jobs", jobs, "Parallelism limit (frames, judge requests)")->check(CLI::PositiveNumber);

  // convert
  cli::ConvertConfig convert;
  std::string convert_out, summary, references, samples, templates;
  std::vector<std::string> native_dims, sample_rates;
  auto* c = app.add_subcommand("convert", "Normalize a dataset into QARecord JSON-lines");
  c->add_option("--adapter", convert.adapter, "drivelm|nuscenes-qa|nuscenes-mqa|omnidrive|grounding")->required();
  c->add_option("--input,-i", convert.input, "Dataset file")->required();
  c->add_option("--output,-o", convert_out, "Output JSON-lines")->required();
  c->add_option("--summary", summary, "Summary JSON (default <output>.summary.json)");
  c->add_option("--references-out", references, "Also write an eval reference file");
  c->add_option("--samples-out", samples, "Also write training samples with the system prompt");
  c->add_option("--templates", templates, "Grounding question templates (JSON)");
  c->add_option("--grounding-source", convert.grounding_source, "Source label for grounding records");
  c->add_flag("--compress", convert.compress, "Merge all QA pairs of a frame into one record");
  std::string policy = "original";
  c->add_option("--policy", policy, "Coordinate policy")->check(CLI::IsMember({"original", "per-view", "concatenated"}));
  c->add_option("--native-dims", native_dims, "Native camera size WxH or CAM=WxH (repeatable)");
  c->add_option("--sample-rate", sample_rates, "Per-category keep rate, e.g. perception=0.5 (repeatable)");

  // stitch
  cli::StitchConfig stitch;
  std::vector<std::string> stitch_dims;
  auto* s = app.add_subcommand("stitch", "Compose 2688x896 multi-view PNGs from a frame manifest");
  s->add_option("--manifest,-m", stitch.manifest, "Frame manifest (JSON-lines)")->required();
  s->add_option("--output-dir,-o", stitch.output_dir, "Directory for <frame_id>.png")->required();
  s->add_option("--native-dims", stitch_dims, "Native camera size WxH or CAM=WxH (repeatable)");

  // eval
  cli::EvalRunConfig eval;
  std::string eval_out, weights_file, judge_mode = "stub", smoothing = "none";
  std::vector<std::string> disabled;
  auto* e = app.add_subcommand("eval", "Score predictions against references");
  e->add_option("--predictions,-p", eval.predictions, "Predictions JSON-lines")->required();
  e->add_option("--references,-r", eval.references, "References JSON-lines")->required();
  e->add_option("--output,-o", eval_out, "Report JSON path");
  e->add_option("--weights", weights_file, "Final-score weights JSON");
  e->add_option("--match-threshold", eval.metrics.match_options.threshold_px, "Match distance threshold (px)")
      ->check(CLI::NonNegativeNumber);
  e->add_option("--judge", judge_mode, "Judge mode")->check(CLI::IsMember({"stub", "live", "off"}));
  e->add_option("--judge-retries", eval.metrics.judge_options.max_retries, "Retries per pair")
      ->check(CLI::NonNegativeNumber);
  e->add_option("--disable", disabled, "Metrics to skip (accuracy,bleu,rouge_l,cider,match,judge)")
      ->delimiter(',')
      ->check(CLI::IsMember({"accuracy", "bleu", "rouge_l", "cider", "match", "judge"}));
  e->add_option("--bleu-smoothing", smoothing, "none|epsilon")->check(CLI::IsMember({"none", "epsilon"}));
  e->add_option("--rouge-beta", eval.metrics.rouge_beta, "ROUGE-L beta")->check(CLI::PositiveNumber);
  e->add_option("--cider-scale", eval.metrics.cider_options.scale, "CIDEr scale")->check(CLI::PositiveNumber);

  // losscheck
  cli::LosscheckConfig loss;
  std::string loss_out, reduction = "mean";
  auto* l = app.add_subcommand("losscheck", "Compute the text+location loss and check its gradient");
  l->add_option("--logits", loss.logits, "LGT1 logits file")->required();
  l->add_option("--alignment", loss.alignment, "Token alignment JSON")->required();
  l->add_option("--lambda1", loss.lambda1, "Text-loss weight")->required()->check(CLI::NonNegativeNumber);
  l->add_option("--lambda2", loss.lambda2, "Location-loss weight")->required()->check(CLI::NonNegativeNumber);
  l->add_option("--epsilon", loss.check.epsilon, "Finite-difference step")->check(CLI::PositiveNumber);
  l->add_option("--samples", loss.check.sample_count, "Entries to check");
  l->add_option("--reduction", reduction, "mean|sum")->check(CLI::IsMember({"mean", "sum"}));
  l->add_option("--output,-o", loss_out, "Report JSON path");
  l->add_flag("--emit-grad", loss.include_grad, "Include the full gradient in the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : cli::kDataError;
  }

  try {
    if (c->parsed()) {
      convert.output = convert_out;
      convert.policy = parse_policy(policy);
      if (!summary.empty()) convert.summary = summary;
      if (!references.empty()) convert.references = references;
      if (!samples.empty()) convert.samples = samples;
      if (!templates.empty()) convert.templates = templates;
      apply_native_dims(convert.layout, native_dims);
      convert.sampling.seed = seed;
      for (const auto& spec : sample_rates) {
        const auto eq = spec.find('=');
        const auto cat = eq == std::string::npos ? std::nullopt : parse_category(spec.substr(0, eq));
        if (!cat) throw std::invalid_argument("bad --sample-rate '" + spec + "'");
        convert.sampling.rates[*cat] = std::stod(spec.substr(eq + 1));
      }
      return cli::run_convert(convert);
    }
    if (s->parsed()) {
      apply_native_dims(stitch.layout, stitch_dims);
      stitch.jobs = jobs;
      return cli::run_stitch(stitch);
    }
    if (e->parsed()) {
      if (!eval_out.empty()) eval.output = eval_out;
      if (!weights_file.empty()) eval.metrics.weights = ScoreWeights::from_json(read_json_file(weights_file));
      eval.judge = judge_mode == "live" ? cli::JudgeMode::Live
                   : judge_mode == "off" ? cli::JudgeMode::Off
                                         : cli::JudgeMode::Stub;
      eval.seed = seed;
      eval.metrics.judge_options.max_in_flight = jobs;
      eval.metrics.bleu_options.smoothing = smoothing == "epsilon" ? BleuSmoothing::Epsilon : BleuSmoothing::None;
      for (const auto& m : disabled) {
        if (m == "accuracy") eval.metrics.accuracy = false;
        if (m == "bleu") eval.metrics.bleu = false;
        if (m == "rouge_l") eval.metrics.rouge_l = false;
        if (m == "cider") eval.metrics.cider = false;
        if (m == "match") eval.metrics.match = false;
        if (m == "judge") eval.metrics.judge = false;
      }
      return cli::run_eval(eval);
    }
    if (l->parsed()) {
      if (!loss_out.empty()) loss.output = loss_out;
      loss.check.seed = seed;
      loss.check.reduction = reduction == "sum" ? Reduction::Sum : Reduction::Mean;
      return cli::run_losscheck(loss);
    }
  } catch (const IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return cli::kIoError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return cli::kDataError;
  }
  return cli::kDataError;
}
