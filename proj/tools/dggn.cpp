// Command-line front end for the diagram relation-graph pipeline:
//   synth      generate synthetic annotation datasets
//   train      fit a model, write a checkpoint and a loss curve
//   eval       metric table (mAP, graph IoU, Recall@K) for a checkpoint
//   infer      write relation graphs for a dataset
//   sentences  knowledge sentences from inferred graphs
//   diag       update-gate statistics and the candidate-order variance study

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dggn/checkpoint.hpp"
#include "dggn/data.hpp"
#include "dggn/io.hpp"
#include "dggn/metrics.hpp"
#include "dggn/model.hpp"
#include "dggn/pipeline.hpp"
#include "dggn/sentences.hpp"
#include "dggn/synth.hpp"
#include "dggn/trainer.hpp"

namespace {

using dggn::json;

json model_config_json(const dggn::ModelConfig& mc) {
  return {{"mode", dggn::to_string(mc.mode)},     {"use_global", mc.use_global},
          {"weighted_pool", mc.weighted_pool},    {"through_memory", mc.through_memory},
          {"hidden_dim", mc.hidden_dim},          {"seed", mc.seed}};
}

json train_config_json(const dggn::TrainConfig& tc) {
  return {{"lr0", tc.lr0},
          {"lr_decay", tc.lr_decay},
          {"decay_interval", tc.decay_interval},
          {"batch", tc.batch},
          {"iterations", tc.iterations},
          {"adam_beta1", tc.adam_beta1},
          {"adam_beta2", tc.adam_beta2},
          {"adam_eps", tc.adam_eps},
          {"loss_alpha", tc.loss_alpha},
          {"loss_beta", tc.loss_beta},
          {"loss_gamma", tc.loss_gamma},
          {"sample_count", tc.sampling.count},
          {"positive_fraction", tc.sampling.positive_fraction},
          {"detect_score_thresh", tc.detect_score_thresh},
          {"detect_nms_iou", tc.detect_nms_iou},
          {"log_every", tc.log_every},
          {"threads", tc.threads},
          {"seed", tc.seed}};
}

json eval_config_json(const dggn::EvalConfig& ec) {
  return {{"iou_thresholds", ec.iou_thresholds},
          {"edge_iou_match", ec.edge_iou_match},
          {"iou_edge_conf", ec.iou_edge_conf},
          {"graph_edge_conf", ec.graph_edge_conf},
          {"recall_ks", ec.recall_ks},
          {"detect_score_thresh", ec.detect_score_thresh},
          {"detect_nms_iou", ec.detect_nms_iou}};
}

void log_config(const std::string& subcommand, const json& config) {
  json full = {{"subcommand", subcommand}, {"config", config}};
  std::cerr << "[dggn] " << full.dump() << "\n";
}

std::vector<dggn::MetricRow> metric_rows(const dggn::DatasetMetrics& m) {
  std::vector<dggn::MetricRow> rows;
  rows.push_back({"mAP", m.map.value_or(0.0)});
  for (const auto& [tau, ap] : m.ap_per_tau) {
    char name[32];
    std::snprintf(name, sizeof(name), "AP@%.2f", tau);
    rows.push_back({name, ap});
  }
  rows.push_back({"IoU_node", m.iou_node});
  rows.push_back({"IoU_edge", m.iou_edge});
  for (const auto& [k, r] : m.recall_at) rows.push_back({"R@" + std::to_string(k), r});
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diagram relation-graph generation pipeline"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic annotation dataset");
  struct {
    std::string out;
    std::string family = "cycle";
    std::size_t count = 50;
    dggn::SynthSpec spec;
  } synth_opt;
  synth->add_option("--out", synth_opt.out, "output annotation file")->required();
  synth->add_option("--family", synth_opt.family, "cycle | star | dag")->check(CLI::IsMember({"cycle", "star", "dag"}));
  synth->add_option("--count", synth_opt.count, "number of diagrams");
  synth->add_option("--seed", synth_opt.spec.seed, "root seed");
  synth->add_option("--min-nodes", synth_opt.spec.min_nodes, "minimum blob count");
  synth->add_option("--max-nodes", synth_opt.spec.max_nodes, "maximum blob count");
  synth->add_option("--text-prob", synth_opt.spec.text_attach, "probability of labeling a blob");
  synth->add_option("--jitter", synth_opt.spec.jitter, "positional noise (normalized units)");
  synth->add_option("--image-size", synth_opt.spec.image_size, "canvas size in pixels");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train a model on an annotation dataset");
  struct {
    std::string data;
    std::string checkpoint_out;
    std::string loss_csv;
    std::string mode = "dggn";
    bool no_global = false;
    bool unweighted_pool = false;
    bool through_memory = false;
    dggn::ModelConfig mc;
    dggn::TrainConfig tc;
    std::uint64_t seed = 0;
  } train_opt;
  train_cmd->add_option("--data", train_opt.data, "training annotation file")->required();
  train_cmd->add_option("--checkpoint-out", train_opt.checkpoint_out, "checkpoint output path")->required();
  train_cmd->add_option("--loss-csv", train_opt.loss_csv, "loss curve CSV output");
  train_cmd->add_option("--mode", train_opt.mode, "dggn | vanilla_gru | fully_connected")
      ->check(CLI::IsMember({"dggn", "vanilla_gru", "fully_connected"}));
  train_cmd->add_flag("--no-global", train_opt.no_global, "drop the global mask feature");
  train_cmd->add_flag("--unweighted-pool", train_opt.unweighted_pool, "mean-pool stored states without weights");
  train_cmd->add_flag("--through-memory", train_opt.through_memory, "backpropagate through memory reads");
  train_cmd->add_option("--hidden-dim", train_opt.mc.hidden_dim, "GRU hidden dimension");
  train_cmd->add_option("--seed", train_opt.seed, "root seed");
  train_cmd->add_option("--lr0", train_opt.tc.lr0, "initial learning rate");
  train_cmd->add_option("--lr-decay", train_opt.tc.lr_decay, "decay multiplier");
  train_cmd->add_option("--decay-interval", train_opt.tc.decay_interval, "iterations per decay step");
  train_cmd->add_option("--batch", train_opt.tc.batch, "diagrams per iteration");
  train_cmd->add_option("--iterations", train_opt.tc.iterations, "training iterations");
  train_cmd->add_option("--sample-count", train_opt.tc.sampling.count, "relation candidates sampled per diagram");
  train_cmd->add_option("--positive-fraction", train_opt.tc.sampling.positive_fraction,
                        "positive share of the sample");
  train_cmd->add_option("--alpha", train_opt.tc.loss_alpha, "detector classification loss weight (inert)");
  train_cmd->add_option("--beta", train_opt.tc.loss_beta, "detector localization loss weight (inert)");
  train_cmd->add_option("--gamma", train_opt.tc.loss_gamma, "relation loss weight");
  train_cmd->add_option("--log-every", train_opt.tc.log_every, "loss emission interval");
  train_cmd->add_option("--threads", train_opt.tc.threads, "gradient worker threads (0 = hardware)");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  struct {
    std::string data;
    std::string checkpoint;
    std::string report;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
  } eval_opt;
  eval_cmd->add_option("--data", eval_opt.data, "test annotation file")->required();
  eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "trained checkpoint")->required();
  eval_cmd->add_option("--report", eval_opt.report, "metric CSV output");
  eval_cmd->add_option("--seed", eval_opt.seed, "candidate-order seed");
  eval_cmd->add_option("--threads", eval_opt.threads, "evaluation threads (0 = hardware)");

  // ---- infer ----
  auto* infer_cmd = app.add_subcommand("infer", "write relation graphs for a dataset");
  struct {
    std::string data;
    std::string checkpoint;
    std::string out;
    double edge_threshold = 0.1;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
  } infer_opt;
  infer_cmd->add_option("--data", infer_opt.data, "annotation file")->required();
  infer_cmd->add_option("--checkpoint", infer_opt.checkpoint, "trained checkpoint")->required();
  infer_cmd->add_option("--out", infer_opt.out, "graph JSON output")->required();
  infer_cmd->add_option("--edge-threshold", infer_opt.edge_threshold, "edge confidence cut");
  infer_cmd->add_option("--seed", infer_opt.seed, "candidate-order seed");
  infer_cmd->add_option("--threads", infer_opt.threads, "evaluation threads (0 = hardware)");

  // ---- sentences ----
  auto* sent_cmd = app.add_subcommand("sentences", "knowledge sentences from inferred graphs");
  struct {
    std::string graphs;
    std::string out;
    std::string records;
  } sent_opt;
  sent_cmd->add_option("--graphs", sent_opt.graphs, "graph JSON from infer")->required();
  sent_cmd->add_option("--out", sent_opt.out, "line-oriented sentence output")->required();
  sent_cmd->add_option("--records", sent_opt.records, "structured sentence records (JSON)");

  // ---- diag ----
  auto* diag_cmd = app.add_subcommand("diag", "gate statistics and order-variance study");
  struct {
    std::string data;
    std::string checkpoint;
    std::string baseline;
    std::string gate_csv;
    std::string variance_report;
    std::size_t trials = 50;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
  } diag_opt;
  diag_cmd->add_option("--data", diag_opt.data, "test annotation file")->required();
  diag_cmd->add_option("--checkpoint", diag_opt.checkpoint, "trained checkpoint")->required();
  diag_cmd->add_option("--baseline-checkpoint", diag_opt.baseline, "second checkpoint to compare against");
  diag_cmd->add_option("--gate-csv", diag_opt.gate_csv, "gate statistics CSV output")->required();
  diag_cmd->add_option("--variance-report", diag_opt.variance_report, "order-variance CSV output")->required();
  diag_cmd->add_option("--trials", diag_opt.trials, "random orderings to evaluate");
  diag_cmd->add_option("--seed", diag_opt.seed, "study seed");
  diag_cmd->add_option("--threads", diag_opt.threads, "evaluation threads (0 = hardware)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      synth_opt.spec.family = dggn::synth_family_from_string(synth_opt.family);
      json cfg = {{"out", synth_opt.out},
                  {"family", synth_opt.family},
                  {"count", synth_opt.count},
                  {"seed", synth_opt.spec.seed},
                  {"min_nodes", synth_opt.spec.min_nodes},
                  {"max_nodes", synth_opt.spec.max_nodes},
                  {"text_attach", synth_opt.spec.text_attach},
                  {"jitter", synth_opt.spec.jitter},
                  {"image_size", synth_opt.spec.image_size}};
      log_config("synth", cfg);
      auto annotations = dggn::generate(synth_opt.spec, synth_opt.count);
      dggn::save_annotations(synth_opt.out, annotations);
      std::cerr << "[dggn] wrote " << annotations.size() << " diagrams to " << synth_opt.out << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      train_opt.mc.mode = dggn::mode_from_string(train_opt.mode);
      train_opt.mc.use_global = !train_opt.no_global;
      train_opt.mc.weighted_pool = !train_opt.unweighted_pool;
      train_opt.mc.through_memory = train_opt.through_memory;
      train_opt.mc.seed = train_opt.seed;
      train_opt.tc.seed = train_opt.seed;
      json cfg = {{"data", train_opt.data},
                  {"checkpoint_out", train_opt.checkpoint_out},
                  {"model", model_config_json(train_opt.mc)},
                  {"train", train_config_json(train_opt.tc)}};
      log_config("train", cfg);
      auto dataset = dggn::load_annotations(train_opt.data);
      dggn::TrainResult result = dggn::train(dataset, train_opt.mc, train_opt.tc);
      dggn::save_checkpoint(train_opt.checkpoint_out, dggn::make_checkpoint(result, train_opt.tc));
      if (!train_opt.loss_csv.empty()) dggn::save_loss_curve(train_opt.loss_csv, result.curve);
      if (result.diverged) {
        std::cerr << "[dggn] training diverged at iteration " << result.iterations_done
                  << "; checkpoint holds the last finite state\n";
        return 1;
      }
      if (!result.curve.empty())
        std::cerr << "[dggn] final loss " << result.curve.back().loss << " after " << result.iterations_done
                  << " iterations\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      dggn::EvalConfig ec;
      json cfg = {{"data", eval_opt.data},
                  {"checkpoint", eval_opt.checkpoint},
                  {"seed", eval_opt.seed},
                  {"eval", eval_config_json(ec)}};
      log_config("eval", cfg);
      auto dataset = dggn::load_annotations(eval_opt.data);
      dggn::Model model = dggn::model_from_checkpoint(dggn::load_checkpoint(eval_opt.checkpoint));
      dggn::DatasetMetrics metrics =
          dggn::evaluate_dataset(model, dataset, ec, eval_opt.seed, eval_opt.threads);
      auto rows = metric_rows(metrics);
      // hash the semantic configuration only, not file locations
      json hash_cfg = {{"model", model_config_json(model.config)}, {"eval", eval_config_json(ec)},
                       {"seed", eval_opt.seed}};
      const std::string hash = dggn::hash_string(dggn::config_hash(hash_cfg));
      std::cout << dggn::metric_table(rows, hash);
      if (!eval_opt.report.empty()) dggn::save_metric_csv(eval_opt.report, rows, hash);
      return 0;
    }

    if (infer_cmd->parsed()) {
      dggn::EvalConfig ec;
      ec.graph_edge_conf = infer_opt.edge_threshold;
      json cfg = {{"data", infer_opt.data},
                  {"checkpoint", infer_opt.checkpoint},
                  {"out", infer_opt.out},
                  {"edge_threshold", infer_opt.edge_threshold},
                  {"seed", infer_opt.seed}};
      log_config("infer", cfg);
      auto dataset = dggn::load_annotations(infer_opt.data);
      dggn::Model model = dggn::model_from_checkpoint(dggn::load_checkpoint(infer_opt.checkpoint));
      auto runs = dggn::run_dataset(model, dataset, ec, infer_opt.seed, infer_opt.threads);
      std::vector<dggn::DiagramGraph> graphs;
      graphs.reserve(runs.size());
      for (const auto& run : runs)
        graphs.push_back(dggn::assemble_graph(run.detections, run.candidates, run.probs, ec.graph_edge_conf));
      dggn::save_graphs(infer_opt.out, graphs);
      std::cerr << "[dggn] wrote " << graphs.size() << " graphs to " << infer_opt.out << "\n";
      return 0;
    }

    if (sent_cmd->parsed()) {
      json cfg = {{"graphs", sent_opt.graphs}, {"out", sent_opt.out}, {"records", sent_opt.records}};
      log_config("sentences", cfg);
      auto graphs = dggn::load_graphs(sent_opt.graphs);
      std::vector<std::vector<dggn::KnowledgeSentence>> per_graph;
      std::vector<std::string> warnings;
      for (const auto& g : graphs) {
        auto sentences = dggn::generate_sentences(g, &warnings);
        auto facts = dggn::generate_facts(g);
        sentences.insert(sentences.end(), facts.begin(), facts.end());
        per_graph.push_back(std::move(sentences));
      }
      for (const auto& w : warnings) std::cerr << "[dggn] warning: " << w << "\n";
      dggn::save_sentences_text(sent_opt.out, per_graph);
      if (!sent_opt.records.empty()) dggn::save_sentences_records(sent_opt.records, per_graph);
      return 0;
    }

    if (diag_cmd->parsed()) {
      dggn::EvalConfig ec;
      json cfg = {{"data", diag_opt.data},       {"checkpoint", diag_opt.checkpoint},
                  {"baseline", diag_opt.baseline}, {"trials", diag_opt.trials},
                  {"seed", diag_opt.seed},       {"eval", eval_config_json(ec)}};
      log_config("diag", cfg);
      auto dataset = dggn::load_annotations(diag_opt.data);

      struct Entry {
        std::string name;
        dggn::Model model;
      };
      std::vector<Entry> entries;
      entries.push_back({"model", dggn::model_from_checkpoint(dggn::load_checkpoint(diag_opt.checkpoint))});
      if (!diag_opt.baseline.empty())
        entries.push_back({"baseline", dggn::model_from_checkpoint(dggn::load_checkpoint(diag_opt.baseline))});

      std::ofstream gate_out(diag_opt.gate_csv, std::ios::trunc);
      if (!gate_out) throw std::runtime_error("cannot write '" + diag_opt.gate_csv + "'");
      gate_out << "model,statistic,step,value\n";
      std::ofstream var_out(diag_opt.variance_report, std::ios::trunc);
      if (!var_out) throw std::runtime_error("cannot write '" + diag_opt.variance_report + "'");
      var_out << "model,trials,ap50_mean,ap50_variance,ap50_stddev\n";

      for (const Entry& entry : entries) {
        if (entry.model.config.mode == dggn::Mode::fully_connected) {
          std::cerr << "[dggn] " << entry.name << " has no update gates (fully_connected); skipping gate stats\n";
        } else {
          dggn::GateStudy study = dggn::gate_study(entry.model, dataset, ec, diag_opt.seed, diag_opt.threads);
          gate_out << entry.name << ",overall_mean,," << dggn::format_double(study.overall.mean) << "\n";
          gate_out << entry.name << ",overall_q1,," << dggn::format_double(study.overall.q1) << "\n";
          gate_out << entry.name << ",overall_q3,," << dggn::format_double(study.overall.q3) << "\n";
          for (std::size_t t = 0; t < study.first_diagram_step_means.size(); ++t)
            gate_out << entry.name << ",step_mean," << t << ","
                     << dggn::format_double(study.first_diagram_step_means[t]) << "\n";
        }
        dggn::OrderVarianceResult var =
            dggn::order_variance_study(entry.model, dataset, ec, diag_opt.trials, diag_opt.seed, diag_opt.threads);
        var_out << entry.name << "," << diag_opt.trials << "," << dggn::format_double(var.stats.mean) << ","
                << dggn::format_double(var.stats.variance) << "," << dggn::format_double(var.stats.stddev) << "\n";
        std::cerr << "[dggn] " << entry.name << ": AP50 std over " << diag_opt.trials << " orderings = "
                  << var.stats.stddev << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "[dggn] error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
