// trajwatch: command-line front end for the streaming trajectory
// anomaly-detection library. Subcommands cover the full workflow: synthesize
// a corpus, condition it, predict, score, evaluate, run the live pipeline,
// benchmark throughput, and convert detection windows into reaction budget.
//
// Exit codes: 0 success, 1 domain/data error, 2 usage error.

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trajwatch/trajwatch.hpp"

namespace {

using namespace trajwatch;

// Config assembly shared by data subcommands: --config loads a key=value
// file, individual flags override single fields on top of it.
struct ConfigFlags {
  std::string config_path;
  std::optional<double> sample_rate_hz;
  std::optional<double> t_in_sec;
  std::optional<double> t_pred_sec;
  std::optional<int> prediction_stride;
  std::optional<std::string> class_whitelist;
  std::optional<std::string> flow_axis;
  std::optional<int> min_presence_frames;
  std::optional<int> max_gap_frames;
  std::optional<double> ade_threshold;
  std::optional<double> angle_threshold;
  std::optional<double> degenerate_eps;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_path, "key = value pipeline config file");
    cmd.add_option("--sample-rate-hz", sample_rate_hz, "track sample rate");
    cmd.add_option("--t-in-sec", t_in_sec, "observation window (seconds)");
    cmd.add_option("--t-pred-sec", t_pred_sec, "prediction horizon (seconds)");
    cmd.add_option("--prediction-stride", prediction_stride,
                   "samples between anchors");
    cmd.add_option("--class-whitelist", class_whitelist,
                   "comma-separated class ids to keep");
    cmd.add_option("--flow-axis", flow_axis, "expected travel direction dx,dy");
    cmd.add_option("--min-presence-frames", min_presence_frames,
                   "minimum samples per track");
    cmd.add_option("--max-gap-frames", max_gap_frames,
                   "largest interpolatable gap");
    cmd.add_option("--ade-threshold", ade_threshold,
                   "displacement flag threshold (pixels)");
    cmd.add_option("--angle-threshold", angle_threshold,
                   "divergence flag threshold (radians)");
    cmd.add_option("--degenerate-eps", degenerate_eps,
                   "chord norm below which the angle is degenerate");
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (sample_rate_hz) cfg.sample_rate_hz = *sample_rate_hz;
    if (t_in_sec) cfg.t_in_sec = *t_in_sec;
    if (t_pred_sec) cfg.t_pred_sec = *t_pred_sec;
    if (prediction_stride) cfg.prediction_stride = *prediction_stride;
    if (class_whitelist) {
      set_config_key(cfg, "class_whitelist", *class_whitelist,
                     "--class-whitelist");
    }
    if (flow_axis) set_config_key(cfg, "flow_axis", *flow_axis, "--flow-axis");
    if (min_presence_frames) cfg.min_presence_frames = *min_presence_frames;
    if (max_gap_frames) cfg.max_gap_frames = *max_gap_frames;
    if (ade_threshold) cfg.ade_threshold = *ade_threshold;
    if (angle_threshold) cfg.angle_threshold = *angle_threshold;
    if (degenerate_eps) cfg.degenerate_eps = *degenerate_eps;
    return cfg;
  }
};

std::vector<double> parse_windows(const std::string& list) {
  std::vector<double> out;
  for (const auto part : split(list, ',')) {
    out.push_back(parse_double(part, "--windows"));
  }
  if (out.empty()) fail(Errc::invalid_argument, "--windows is empty");
  return out;
}

DegeneratePolicy parse_policy(const std::string& name) {
  if (name == "error") return DegeneratePolicy::error;
  if (name == "max_divergence") return DegeneratePolicy::max_divergence;
  if (name == "zero") return DegeneratePolicy::zero;
  fail(Errc::invalid_argument, "unknown policy '" + name +
                                   "' (expected error, max_divergence, zero)");
}

// Label map for evaluation: every labeled track in the corpus.
std::map<std::int64_t, int> label_map(const std::vector<Trajectory>& tracks) {
  std::map<std::int64_t, int> labels;
  for (const auto& traj : tracks) {
    if (traj.label) labels[traj.track_id] = *traj.label;
  }
  return labels;
}

std::string throughput_csv(const ThroughputReport& tp) {
  std::ostringstream out;
  out << "trajectories_per_s,vehicles_per_s,wall_time_s,frames,predictions,"
         "vehicles\n";
  out << format_double(tp.trajectories_per_s) << ','
      << format_double(tp.vehicles_per_s) << ','
      << format_double(tp.wall_time_s) << ',' << tp.frames << ','
      << tp.predictions << ',' << tp.vehicles << '\n';
  return out.str();
}

nlohmann::json throughput_json(const ThroughputReport& tp) {
  nlohmann::json j;
  j["trajectories_per_s"] = tp.trajectories_per_s;
  j["vehicles_per_s"] = tp.vehicles_per_s;
  j["wall_time_s"] = tp.wall_time_s;
  j["frames"] = tp.frames;
  j["predictions"] = tp.predictions;
  j["vehicles"] = tp.vehicles;
  return j;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct SynthArgs {
  std::string scene_path;
  std::string anomaly_path;
  std::string output;
  std::optional<int> lanes;
  std::optional<double> duration_s;
  std::optional<double> vehicles_per_s;
  std::optional<double> noise_px;
  std::optional<std::int64_t> seed;
  std::optional<std::string> kind;
  std::optional<double> onset_s;
  std::optional<double> severity;
  std::optional<double> fraction;
  std::int64_t inject_seed = 1;
};

int run_synth(const SynthArgs& args) {
  SceneSpec scene;
  if (!args.scene_path.empty()) {
    scene = parse_scene(read_text_file(args.scene_path), args.scene_path);
  }
  if (args.lanes) scene.lanes = *args.lanes;
  if (args.duration_s) scene.duration_s = *args.duration_s;
  if (args.vehicles_per_s) scene.vehicles_per_s = *args.vehicles_per_s;
  if (args.noise_px) scene.noise_px = *args.noise_px;
  if (args.seed) scene.seed = static_cast<std::uint64_t>(*args.seed);

  auto corpus = gen_normal(scene);
  const bool want_inject = !args.anomaly_path.empty() || args.kind ||
                           args.onset_s || args.severity || args.fraction;
  if (want_inject) {
    AnomalySpec spec;
    if (!args.anomaly_path.empty()) {
      spec = parse_anomaly(read_text_file(args.anomaly_path), args.anomaly_path);
    }
    if (args.kind) spec.kind = parse_anomaly_kind(*args.kind);
    if (args.onset_s) spec.onset_s = *args.onset_s;
    if (args.severity) spec.severity = *args.severity;
    if (args.fraction) spec.fraction = *args.fraction;
    corpus = inject(std::move(corpus),
                    spec, static_cast<std::uint64_t>(args.inject_seed));
  }
  const auto rows = write_tracks(corpus, args.output);
  std::int64_t anomalous = 0;
  for (const auto& traj : corpus) anomalous += traj.label.value_or(0) == 1;
  std::cout << "wrote " << args.output << ": " << corpus.size() << " tracks ("
            << anomalous << " anomalous), " << rows << " rows\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming vehicle-trajectory anomaly detection"};
  app.require_subcommand(1);

  // --- synth ---------------------------------------------------------------
  SynthArgs synth_args;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic labeled corpus");
  synth_cmd->add_option("--scene", synth_args.scene_path, "scene spec file");
  synth_cmd->add_option("--anomaly", synth_args.anomaly_path,
                        "anomaly spec file (enables injection)");
  synth_cmd->add_option("-o,--output", synth_args.output, "track CSV to write")
      ->required();
  synth_cmd->add_option("--lanes", synth_args.lanes, "lane count override");
  synth_cmd->add_option("--duration-s", synth_args.duration_s,
                        "scene duration override");
  synth_cmd->add_option("--vehicles-per-s", synth_args.vehicles_per_s,
                        "arrival rate override");
  synth_cmd->add_option("--noise-px", synth_args.noise_px,
                        "detection noise override");
  synth_cmd->add_option("--seed", synth_args.seed, "scene seed override");
  synth_cmd->add_option("--kind", synth_args.kind,
                        "anomaly kind (lane_departure, drift_to_camera, "
                        "abrupt_halt); enables injection");
  synth_cmd->add_option("--onset-s", synth_args.onset_s, "anomaly onset");
  synth_cmd->add_option("--severity", synth_args.severity, "anomaly severity");
  synth_cmd->add_option("--fraction", synth_args.fraction,
                        "fraction of tracks to perturb");
  synth_cmd->add_option("--inject-seed", synth_args.inject_seed,
                        "selection seed for injection");

  // --- condition -----------------------------------------------------------
  struct {
    std::string input, output;
    std::optional<double> decimate_from_hz;
    ConfigFlags cfg;
  } cond_args;
  auto* cond_cmd =
      app.add_subcommand("condition", "filter, gap-fill, and split tracks");
  cond_cmd->add_option("-i,--input", cond_args.input, "raw track CSV")
      ->required();
  cond_cmd->add_option("-o,--output", cond_args.output, "conditioned CSV")
      ->required();
  cond_cmd->add_option("--decimate-from-hz", cond_args.decimate_from_hz,
                       "input rate to decimate down from");
  cond_args.cfg.attach(*cond_cmd);

  // --- predict ---------------------------------------------------------
  struct {
    std::string input, output, predictor = "constant_velocity";
    ConfigFlags cfg;
  } pred_args;
  auto* pred_cmd = app.add_subcommand(
      "predict", "issue predictions over a conditioned corpus");
  pred_cmd->add_option("-i,--input", pred_args.input, "conditioned track CSV")
      ->required();
  pred_cmd->add_option("-o,--output", pred_args.output, "prediction JSONL")
      ->required();
  pred_cmd->add_option("--predictor", pred_args.predictor,
                       "predictor to use (constant_velocity)");
  pred_args.cfg.attach(*pred_cmd);

  // --- score -----------------------------------------------------------
  struct {
    std::string tracks, predictions, output;
    std::string windows, policy = "max_divergence";
    int threads = 1;
    ConfigFlags cfg;
  } score_args;
  auto* score_cmd = app.add_subcommand(
      "score", "score predictions against actual trajectories");
  score_cmd->add_option("--tracks", score_args.tracks, "conditioned track CSV")
      ->required();
  score_cmd
      ->add_option("--predictions", score_args.predictions, "prediction JSONL")
      ->required();
  score_cmd->add_option("-o,--output", score_args.output, "score CSV")
      ->required();
  score_cmd->add_option("--windows", score_args.windows,
                        "comma-separated detection windows (seconds)");
  score_cmd->add_option("--policy", score_args.policy,
                        "degenerate-chord policy (error, max_divergence, zero)");
  score_cmd->add_option("--threads", score_args.threads, "worker threads");
  score_args.cfg.attach(*score_cmd);

  // --- eval ------------------------------------------------------------
  struct {
    std::string scores, tracks, output;
    std::string windows, methods = "ade,angle", aggregate = "max", roc_dir;
  } eval_args;
  auto* eval_cmd = app.add_subcommand(
      "eval", "ROC/AUC/EER across detection windows and methods");
  eval_cmd->add_option("--scores", eval_args.scores, "score CSV")->required();
  eval_cmd->add_option("--tracks", eval_args.tracks, "labeled track CSV")
      ->required();
  eval_cmd->add_option("-o,--output", eval_args.output, "report CSV")
      ->required();
  eval_cmd->add_option("--windows", eval_args.windows,
                       "windows to report (default: all present)");
  eval_cmd->add_option("--methods", eval_args.methods, "methods to report");
  eval_cmd->add_option("--aggregate", eval_args.aggregate,
                       "per-track aggregation (max, mean)");
  eval_cmd->add_option("--roc-dir", eval_args.roc_dir,
                       "directory for per-report ROC point CSVs");

  // --- pipeline ----------------------------------------------------------
  struct {
    std::string input, scores_out, throughput_out;
    std::string windows, policy = "max_divergence";
    int threads = 1;
    ConfigFlags cfg;
  } pipe_args;
  auto* pipe_cmd = app.add_subcommand(
      "pipeline", "stream detections end to end, emitting alerts as JSONL");
  pipe_cmd->add_option("-i,--input", pipe_args.input, "detection CSV")
      ->required();
  pipe_cmd->add_option("--scores-out", pipe_args.scores_out,
                       "also write every score row here");
  pipe_cmd->add_option("--throughput-out", pipe_args.throughput_out,
                       "write the throughput report here (.csv or .json)");
  pipe_cmd->add_option("--windows", pipe_args.windows,
                       "comma-separated detection windows (seconds)");
  pipe_cmd->add_option("--policy", pipe_args.policy,
                       "degenerate-chord policy (error, max_divergence, zero)");
  pipe_cmd->add_option("--threads", pipe_args.threads, "worker threads");
  pipe_args.cfg.attach(*pipe_cmd);

  // --- bench -----------------------------------------------------------
  struct {
    std::string scene_path, output;
    std::string windows;
    int reps = 5;
    int threads = 1;
    std::optional<double> vehicles_per_s, duration_s, noise_px;
    std::optional<int> lanes;
    std::optional<std::int64_t> seed;
    ConfigFlags cfg;
  } bench_args;
  auto* bench_cmd = app.add_subcommand(
      "bench", "measure streaming throughput on a synthetic scene");
  bench_cmd->add_option("--scene", bench_args.scene_path, "scene spec file");
  bench_cmd->add_option("-o,--output", bench_args.output,
                        "median throughput report (.csv or .json)");
  bench_cmd->add_option("--windows", bench_args.windows,
                        "comma-separated detection windows (seconds)");
  bench_cmd->add_option("--reps", bench_args.reps, "timed repetitions");
  bench_cmd->add_option("--threads", bench_args.threads, "worker threads");
  bench_cmd->add_option("--vehicles-per-s", bench_args.vehicles_per_s,
                        "arrival rate override");
  bench_cmd->add_option("--duration-s", bench_args.duration_s,
                        "scene duration override");
  bench_cmd->add_option("--noise-px", bench_args.noise_px,
                        "detection noise override");
  bench_cmd->add_option("--lanes", bench_args.lanes, "lane count override");
  bench_cmd->add_option("--seed", bench_args.seed, "scene seed override");
  bench_args.cfg.attach(*bench_cmd);

  // --- buffer ----------------------------------------------------------
  struct {
    double lead = kDefaultTotalLeadSec;
    double window = 0.0;
    std::optional<double> speed_mph, speed_mps;
  } buffer_args;
  auto* buffer_cmd = app.add_subcommand(
      "buffer", "reaction budget left after a detection window");
  buffer_cmd->add_option("--lead", buffer_args.lead,
                         "total lead time in seconds");
  buffer_cmd
      ->add_option("--window", buffer_args.window,
                   "detection window in seconds")
      ->required();
  auto* mph = buffer_cmd->add_option("--speed-mph", buffer_args.speed_mph,
                                     "vehicle speed in mph");
  buffer_cmd->add_option("--speed-mps", buffer_args.speed_mps,
                         "vehicle speed in m/s")
      ->excludes(mph);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth_args);

    if (cond_cmd->parsed()) {
      const auto cfg = ensure_valid(cond_args.cfg.build());
      const auto raw =
          read_tracks(cond_args.input, cfg, cond_args.decimate_from_hz);
      const auto conditioned = condition(raw, cfg);
      const auto rows = write_tracks(conditioned, cond_args.output);
      std::cout << "conditioned " << raw.size() << " -> " << conditioned.size()
                << " tracks, " << rows << " rows -> " << cond_args.output
                << "\n";
      return 0;
    }

    if (pred_cmd->parsed()) {
      if (pred_args.predictor != "constant_velocity") {
        fail(Errc::invalid_argument,
             "unknown predictor '" + pred_args.predictor + "'");
      }
      const auto cfg = ensure_valid(pred_args.cfg.build());
      const auto tracks = read_tracks(pred_args.input, cfg);
      const ConstantVelocityPredictor predictor;
      const auto preds = issue_predictions(tracks, cfg, predictor);
      write_predictions(preds, pred_args.output);
      std::cout << "issued " << preds.size() << " predictions over "
                << tracks.size() << " tracks -> " << pred_args.output << "\n";
      return 0;
    }

    if (score_cmd->parsed()) {
      const auto cfg = ensure_valid(score_args.cfg.build());
      const auto tracks = read_tracks(score_args.tracks, cfg);
      const auto preds = read_external_predictions(score_args.predictions);
      const auto windows = score_args.windows.empty()
                               ? default_windows()
                               : parse_windows(score_args.windows);
      const auto result =
          score_corpus(preds, tracks, windows, cfg,
                       parse_policy(score_args.policy), score_args.threads);
      write_scores(result.scores, score_args.output);
      std::cout << "scored " << result.scores.size() << " rows ("
                << result.skipped << " window pairs skipped) -> "
                << score_args.output << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      const PipelineConfig cfg;  // labels only; geometry knobs are unused
      const auto rows = read_scores(eval_args.scores);
      const auto tracks = read_tracks(eval_args.tracks, cfg);
      const auto labels = label_map(tracks);
      std::vector<double> windows;
      if (!eval_args.windows.empty()) {
        windows = parse_windows(eval_args.windows);
      } else {
        std::set<double> seen;
        for (const auto& row : rows) seen.insert(row.window_sec);
        windows.assign(seen.begin(), seen.end());
      }
      std::vector<Method> methods;
      for (const auto part : split(eval_args.methods, ',')) {
        methods.push_back(parse_method(trim(part)));
      }
      const auto reports =
          window_sweep(rows, labels, windows, methods,
                       parse_aggregate(eval_args.aggregate));
      write_text_file(eval_args.output, format_reports(reports));
      if (!eval_args.roc_dir.empty()) {
        for (const auto& report : reports) {
          const std::string path = eval_args.roc_dir + "/roc_" +
                                   format_double(report.window_sec) + "_" +
                                   to_string(report.method) + ".csv";
          write_text_file(path, format_roc(report.roc));
        }
      }
      std::cout << "wrote " << reports.size() << " reports -> "
                << eval_args.output << "\n";
      return 0;
    }

    if (pipe_cmd->parsed()) {
      const auto cfg = ensure_valid(pipe_args.cfg.build());
      const auto rows =
          parse_track_rows(read_text_file(pipe_args.input), pipe_args.input);
      const auto windows = pipe_args.windows.empty()
                               ? default_windows()
                               : parse_windows(pipe_args.windows);
      const ConstantVelocityPredictor predictor;
      const auto result =
          run_stream(rows, cfg, predictor, parse_policy(pipe_args.policy),
                     windows, pipe_args.threads);
      for (const auto& alert : result.alerts) {
        nlohmann::json j;
        j["frame"] = alert.frame;
        j["track_id"] = alert.track_id;
        j["window_sec"] = alert.window_sec;
        j["method"] = to_string(alert.method);
        j["score"] = alert.score;
        j["threshold"] = alert.threshold;
        std::cout << j.dump() << "\n";
      }
      if (!pipe_args.scores_out.empty()) {
        write_scores(result.scores, pipe_args.scores_out);
      }
      if (!pipe_args.throughput_out.empty()) {
        if (ends_with(pipe_args.throughput_out, ".json")) {
          write_text_file(pipe_args.throughput_out,
                          throughput_json(result.throughput).dump(2) + "\n");
        } else {
          write_text_file(pipe_args.throughput_out,
                          throughput_csv(result.throughput));
        }
      }
      std::cerr << "stream: " << result.throughput.predictions
                << " predictions, " << result.scores.size() << " scores, "
                << result.alerts.size() << " alerts, " << result.skipped
                << " window pairs skipped\n";
      return 0;
    }

    if (bench_cmd->parsed()) {
      SceneSpec scene;
      if (!bench_args.scene_path.empty()) {
        scene = parse_scene(read_text_file(bench_args.scene_path),
                            bench_args.scene_path);
      }
      if (bench_args.vehicles_per_s) {
        scene.vehicles_per_s = *bench_args.vehicles_per_s;
      }
      if (bench_args.duration_s) scene.duration_s = *bench_args.duration_s;
      if (bench_args.noise_px) scene.noise_px = *bench_args.noise_px;
      if (bench_args.lanes) scene.lanes = *bench_args.lanes;
      if (bench_args.seed) {
        scene.seed = static_cast<std::uint64_t>(*bench_args.seed);
      }
      const auto cfg = ensure_valid(bench_args.cfg.build());
      const auto windows = bench_args.windows.empty()
                               ? default_windows()
                               : parse_windows(bench_args.windows);
      const ConstantVelocityPredictor predictor;
      const auto result =
          bench(scene, cfg, predictor, DegeneratePolicy::max_divergence,
                windows, bench_args.reps, bench_args.threads);
      const auto& tp = result.median;
      std::cout << "trajectories_per_s=" << format_double(tp.trajectories_per_s)
                << " vehicles_per_s=" << format_double(tp.vehicles_per_s)
                << " wall_time_s=" << format_double(tp.wall_time_s)
                << " frames=" << tp.frames << " predictions=" << tp.predictions
                << " reps=" << bench_args.reps << "\n";
      if (!bench_args.output.empty()) {
        if (ends_with(bench_args.output, ".json")) {
          nlohmann::json j;
          j["median"] = throughput_json(tp);
          auto runs = nlohmann::json::array();
          for (const auto& run : result.runs) runs.push_back(throughput_json(run));
          j["runs"] = std::move(runs);
          write_text_file(bench_args.output, j.dump(2) + "\n");
        } else {
          write_text_file(bench_args.output, throughput_csv(tp));
        }
      }
      return 0;
    }

    if (buffer_cmd->parsed()) {
      double speed = kDefaultSpeedMps;
      if (buffer_args.speed_mps) {
        speed = *buffer_args.speed_mps;
      } else if (buffer_args.speed_mph) {
        speed = *buffer_args.speed_mph * kMphToMps;
      }
      const auto bt = buffer_time(buffer_args.lead, buffer_args.window, speed);
      std::cout << "buffer_s=" << format_double(bt.buffer_s)
                << " distance_m=" << format_double(bt.distance_m) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;  // no subcommand matched (unreachable with require_subcommand)
}
