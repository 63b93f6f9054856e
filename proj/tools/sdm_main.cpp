#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sdm/eval.hpp"
#include "sdm/format.hpp"
#include "sdm/optimizer.hpp"
#include "sdm/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

// Declarative run config: a JSON object whose keys are long option names.
// Values from the file are injected as trailing arguments, so anything
// already present on the command line wins.
std::vector<std::string> merge_config_file(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    for (const char* name : {"--config", "--spec"}) {
      const std::string eq = std::string(name) + "=";
      if (a == name && i + 1 < args.size()) path = args[i + 1];
      else if (a.rfind(eq, 0) == 0) path = a.substr(eq.size());
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw DataError("cannot open run config '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("run config '" + path + "': " + e.what());
  }
  if (!doc.is_object()) throw DataError("run config '" + path + "' must be a JSON object");

  for (const auto& [key, value] : doc.items()) {
    const std::string flag = "--" + key;
    const bool present = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (present) continue;
    std::string rendered;
    if (value.is_string()) {
      rendered = value.get<std::string>();
    } else if (value.is_array()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (i) rendered += ",";
        rendered += value[i].dump();
      }
    } else {
      rendered = value.dump();
    }
    args.push_back(flag + "=" + rendered);
  }
  return args;
}

std::vector<sdm::SceneConfig> load_corpus(const fs::path& dir, int limit) {
  if (!fs::is_directory(dir)) throw DataError("corpus directory '" + dir.string() + "' not found");

  std::vector<fs::path> files;
  const fs::path manifest = dir / "manifest.txt";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    if (!in) throw DataError("cannot open '" + manifest.string() + "'");
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream iss(line);
      std::string tag, id, seed, file;
      if (iss >> tag >> id >> seed >> file && tag == "cfg") files.push_back(dir / file);
    }
  } else {
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".skycfg") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  }
  if (limit > 0 && static_cast<int>(files.size()) > limit)
    files.resize(static_cast<std::size_t>(limit));
  if (files.empty()) throw DataError("no configs found in '" + dir.string() + "'");

  std::vector<sdm::SceneConfig> configs;
  configs.reserve(files.size());
  for (const fs::path& f : files) {
    std::vector<std::string> warnings;
    try {
      configs.push_back(sdm::load_config(f, &warnings));
    } catch (const sdm::ParseError& e) {
      throw DataError(f.string() + ": " + e.what());
    }
    for (const std::string& w : warnings) std::cerr << f.string() << ": warning: " << w << "\n";
  }
  return configs;
}

struct GenerateCmd {
  std::string out;
  int count = 16;
  std::uint64_t seed = 0;
  sdm::GenParams gen{};

  std::string config_string() const {
    std::ostringstream os;
    os << "cmd=generate count=" << count << " seed=" << seed
       << " min_objects=" << gen.min_objects << " max_objects=" << gen.max_objects
       << " z_lo=" << sdm::format_double(gen.z_lo) << " z_hi=" << sdm::format_double(gen.z_hi)
       << " tau=" << sdm::format_double(gen.tau) << " sigma=" << sdm::format_double(gen.sigma)
       << " theta=" << sdm::format_double(gen.theta_star.x) << ","
       << sdm::format_double(gen.theta_star.y);
    return os.str();
  }

  void run() const {
    if (count < 0) throw CLI::ValidationError("--count must be non-negative");
    if (count > 0) gen.validate();
    fs::create_directories(out);
    const std::string hash = hex64(fnv1a(config_string()));

    std::vector<std::string> rows;
    if (count > 0) {
      sdm::GenParams base = gen;
      base.seed = seed;
      const std::vector<sdm::SceneConfig> corpus = sdm::generate_corpus(base, count);
      for (int i = 0; i < count; ++i) {
        const sdm::SceneConfig& cfg = corpus[static_cast<std::size_t>(i)];
        const std::string file = cfg.id + ".skycfg";
        sdm::save_config(cfg, fs::path(out) / file);
        rows.push_back("cfg " + cfg.id + " " +
                       hex64(sdm::derive_seed(seed, static_cast<std::uint64_t>(i))) + " " + file);
      }
    }

    std::ofstream man(fs::path(out) / "manifest.txt", std::ios::binary);
    if (!man) throw DataError("cannot write manifest in '" + out + "'");
    man << "SKYMANIFEST1\n" << "config_hash " << hash << "\n" << "count " << count << "\n";
    for (const std::string& r : rows) man << r << "\n";
    std::cout << "wrote " << count << " configs to " << out << " (config_hash " << hash << ")\n";
  }
};

struct TrainCmd {
  std::string data;
  std::string report_path;
  sdm::TrainParams hp{};
  int noise = 0;
  std::uint64_t noise_seed = 0;
  std::uint64_t seed = 0;
  int limit = 0;

  std::string config_string() const {
    std::ostringstream os;
    os << "cmd=train data=" << data << " epochs=" << hp.n_epoch
       << " lr=" << sdm::format_double(hp.lr) << " batch=" << hp.batch_size << " s=" << hp.s
       << " zoom_schedule=" << join_ints(hp.resolved_schedule())
       << " monitor=" << hp.monitor_window
       << " metric=" << (hp.metric == sdm::LossMetric::L1 ? "l1" : "l2")
       << " noise=" << noise << " noise_seed=" << noise_seed << " seed=" << seed
       << " limit=" << limit;
    return os.str();
  }

  void run() const {
    hp.validate();
    if (noise < 0) throw CLI::ValidationError("--noise must be non-negative");
    std::vector<sdm::SceneConfig> configs = load_corpus(data, limit);
    if (noise > 0)
      for (std::size_t j = 0; j < configs.size(); ++j)
        configs[j].target =
            sdm::add_noise(configs[j].target, noise, sdm::derive_seed(noise_seed, j));

    const sdm::TrainReport report = sdm::train(configs, hp, seed);
    const std::string hash = hex64(fnv1a(config_string()));

    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw DataError("cannot write report '" + report_path + "'");
    out << "SDMREPORT1\n";
    out << "config_hash " << hash << "\n";
    out << "seed " << report.seed << "\n";
    out << "corpus_size " << configs.size() << "\n";
    out << "epochs " << hp.n_epoch << "\n";
    out << "batches_run " << report.batches_run << "\n";
    out << "stopped_by_monitor " << (report.stopped_by_monitor ? 1 : 0) << "\n";
    out << "degenerate_lr " << (report.degenerate_lr ? 1 : 0) << "\n";
    out << "final_theta " << sdm::format_double(report.final_theta.x) << " "
        << sdm::format_double(report.final_theta.y) << "\n";
    if (report.error) out << "error " << sdm::format_double(*report.error) << "\n";
    for (std::size_t i = 0; i < report.epoch_mean_loss.size(); ++i)
      out << "epoch_mean_loss " << i << " " << sdm::format_double(report.epoch_mean_loss[i])
          << "\n";
    out << "end\n";

    const std::string curve = report_path + ".loss.csv";
    std::ofstream csv(curve, std::ios::binary);
    if (!csv) throw DataError("cannot write loss curve '" + curve + "'");
    csv << "step,loss,theta_x,theta_y\n";
    for (std::size_t i = 0; i < report.step_loss.size(); ++i)
      csv << i << "," << sdm::format_double(report.step_loss[i]) << ","
          << sdm::format_double(report.theta_steps[i].x) << ","
          << sdm::format_double(report.theta_steps[i].y) << "\n";

    std::cout << "trained on " << configs.size() << " configs in "
              << sdm::format_double(report.wall_seconds) << "s: theta = ("
              << sdm::format_double(report.final_theta.x) << ", "
              << sdm::format_double(report.final_theta.y) << ")";
    if (report.error) std::cout << ", error = " << sdm::format_double(*report.error);
    std::cout << " (config_hash " << hash << ")\n";
  }
};

struct EvalCmd {
  std::string out;
  sdm::ExperimentSpec spec{};
  std::uint64_t corpus_seed = 0;

  std::string config_string() const {
    std::ostringstream os;
    os << "cmd=eval levels=" << join_ints(spec.noise_levels) << " trials=" << spec.trials
       << " corpus_size=" << spec.corpus_size << " corpus_seed=" << corpus_seed
       << " seed=" << spec.seed << " epochs=" << spec.train.n_epoch
       << " lr=" << sdm::format_double(spec.train.lr) << " batch=" << spec.train.batch_size
       << " s=" << spec.train.s
       << " zoom_schedule=" << join_ints(spec.train.resolved_schedule())
       << " theta=" << sdm::format_double(spec.gen.theta_star.x) << ","
       << sdm::format_double(spec.gen.theta_star.y);
    return os.str();
  }

  void run() {
    spec.gen.seed = corpus_seed;
    spec.validate();
    const std::vector<sdm::StatRow> rows = sdm::run_noise_sweep(spec, &std::cerr);
    const std::string hash = hex64(fnv1a(config_string()));

    std::ofstream csv(out, std::ios::binary);
    if (!csv) throw DataError("cannot write stats '" + out + "'");
    sdm::write_stats_csv(rows, csv);

    std::ofstream meta(out + ".meta.txt", std::ios::binary);
    meta << "config_hash " << hash << "\n" << config_string() << "\n";

    std::ostringstream table;
    sdm::write_stats_csv(rows, table);
    std::cout << table.str() << "(config_hash " << hash << ")\n";
  }
};

struct GradcheckCmd {
  std::string data;
  std::string out;
  sdm::GradCheckParams params{};
  std::uint64_t seed = 0;
  int config_index = 0;
  int limit = 0;

  void run() const {
    const std::vector<sdm::SceneConfig> configs = load_corpus(data, limit);
    if (config_index < 0 || config_index >= static_cast<int>(configs.size()))
      throw DataError("--config-index out of range (corpus has " +
                      std::to_string(configs.size()) + " configs)");
    const sdm::GradCheckReport report =
        sdm::gradcheck(configs[static_cast<std::size_t>(config_index)], params, seed);

    std::ostringstream body;
    body << "gradcheck: evaluated " << report.evaluated << "/" << report.requested
         << ", skipped " << report.skipped << ", max_rel_err "
         << sdm::format_double(report.max_rel_err) << " -> "
         << (report.pass ? "PASS" : "FAIL") << "\n";
    std::cout << body.str();

    if (!out.empty()) {
      std::ofstream f(out, std::ios::binary);
      if (!f) throw DataError("cannot write report '" + out + "'");
      f << body.str();
      for (const sdm::GradCheckSample& s : report.samples)
        f << "sample theta=(" << sdm::format_double(s.theta.x) << ","
          << sdm::format_double(s.theta.y) << ") analytic=("
          << sdm::format_double(s.analytic_x) << "," << sdm::format_double(s.analytic_y)
          << ") fd=(" << sdm::format_double(s.fd_x) << "," << sdm::format_double(s.fd_y)
          << ") rel_err=" << sdm::format_double(s.rel_err) << "\n";
    }
    if (!report.pass)
      throw sdm::NumericalError("gradient check failed (max_rel_err " +
                                sdm::format_double(report.max_rel_err) + ")");
  }
};

void add_train_options(CLI::App* cmd, sdm::TrainParams& hp) {
  cmd->add_option("--epochs", hp.n_epoch, "Passes over the corpus")->capture_default_str();
  cmd->add_option("--lr", hp.lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--batch", hp.batch_size, "Configs per SGD step")->capture_default_str();
  cmd->add_option("--s", hp.s, "Pyramid depth (levels of halving)")->capture_default_str();
  cmd->add_option("--zoom-schedule", hp.zoom_schedule,
                  "Comma-separated stop levels across training (default: s..0)")
      ->delimiter(',');
  cmd->add_option("--monitor", hp.monitor_window,
                  "Stop after this many consecutive fully-matched batches (0 = off)")
      ->capture_default_str();
  std::map<std::string, sdm::LossMetric> metrics{{"l1", sdm::LossMetric::L1},
                                                 {"l2", sdm::LossMetric::L2}};
  cmd->add_option("--metric", hp.metric, "Loss metric")
      ->transform(CLI::CheckedTransformer(metrics, CLI::ignore_case));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recovers a global XY translation of a 3D point set from a binary target mask"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GenerateCmd gen_cmd;
  CLI::App* gen = app.add_subcommand("generate", "Write a synthetic corpus");
  gen->add_option("--out", gen_cmd.out, "Output directory")->required();
  gen->add_option("--count", gen_cmd.count, "Number of configs")->capture_default_str();
  gen->add_option("--seed", gen_cmd.seed, "Corpus seed")->capture_default_str();
  gen->add_option("--min-objects", gen_cmd.gen.min_objects)->capture_default_str();
  gen->add_option("--max-objects", gen_cmd.gen.max_objects)->capture_default_str();
  gen->add_option("--z-lo", gen_cmd.gen.z_lo, "Nearest object depth")->capture_default_str();
  gen->add_option("--z-hi", gen_cmd.gen.z_hi, "Farthest object depth")->capture_default_str();
  gen->add_option("--tau", gen_cmd.gen.tau, "Disc membership threshold")->capture_default_str();
  gen->add_option("--sigma", gen_cmd.gen.sigma, "Disc falloff scale")->capture_default_str();
  gen->add_option("--theta-a", gen_cmd.gen.theta_star.x, "Hidden translation, x")
      ->capture_default_str();
  gen->add_option("--theta-b", gen_cmd.gen.theta_star.y, "Hidden translation, y")
      ->capture_default_str();
  gen->add_option("--config", "JSON run config (flags win)")->option_text("FILE");

  TrainCmd train_cmd;
  CLI::App* train = app.add_subcommand("train", "Fit the translation estimate on a corpus");
  train->add_option("--data", train_cmd.data, "Corpus directory")->required();
  train->add_option("--report", train_cmd.report_path, "Report file to write")->required();
  add_train_options(train, train_cmd.hp);
  train->add_option("--noise", train_cmd.noise, "Perturb targets at this level first")
      ->capture_default_str();
  train->add_option("--noise-seed", train_cmd.noise_seed)->capture_default_str();
  train->add_option("--seed", train_cmd.seed, "Training seed")->capture_default_str();
  train->add_option("--limit", train_cmd.limit, "Use only the first N configs (0 = all)")
      ->capture_default_str();
  train->add_option("--config", "JSON run config (flags win)")->option_text("FILE");

  EvalCmd eval_cmd;
  CLI::App* eval = app.add_subcommand("eval", "Noise sweep with trial statistics");
  eval->add_option("--out", eval_cmd.out, "Stats CSV to write")->required();
  eval->add_option("--levels", eval_cmd.spec.noise_levels, "Noise levels")->delimiter(',');
  eval->add_option("--trials", eval_cmd.spec.trials, "Trials per level")->capture_default_str();
  eval->add_option("--corpus-size", eval_cmd.spec.corpus_size)->capture_default_str();
  eval->add_option("--corpus-seed", eval_cmd.corpus_seed)->capture_default_str();
  eval->add_option("--seed", eval_cmd.spec.seed, "Master seed for noise and training")
      ->capture_default_str();
  eval->add_option("--theta-a", eval_cmd.spec.gen.theta_star.x)->capture_default_str();
  eval->add_option("--theta-b", eval_cmd.spec.gen.theta_star.y)->capture_default_str();
  add_train_options(eval, eval_cmd.spec.train);
  eval->add_option("--spec", "JSON run config (flags win)")->option_text("FILE");

  GradcheckCmd grad_cmd;
  CLI::App* grad = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  grad->add_option("--data", grad_cmd.data, "Corpus directory")->required();
  grad->add_option("--samples", grad_cmd.params.samples)->capture_default_str();
  grad->add_option("--seed", grad_cmd.seed)->capture_default_str();
  grad->add_option("--step", grad_cmd.params.step, "Central-difference half step")
      ->capture_default_str();
  grad->add_option("--tol", grad_cmd.params.tolerance)->capture_default_str();
  grad->add_option("--range", grad_cmd.params.range, "Translation sampling range")
      ->capture_default_str();
  grad->add_option("--config-index", grad_cmd.config_index, "Which corpus config to check")
      ->capture_default_str();
  grad->add_option("--limit", grad_cmd.limit)->capture_default_str();
  grad->add_option("--out", grad_cmd.out, "Optional per-sample report file");
  grad->add_option("--config", "JSON run config (flags win)")->option_text("FILE");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config_file(args);
    // CLI11 consumes arguments in reverse.
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  try {
    if (app.got_subcommand(gen)) gen_cmd.run();
    if (app.got_subcommand(train)) train_cmd.run();
    if (app.got_subcommand(eval)) eval_cmd.run();
    if (app.got_subcommand(grad)) grad_cmd.run();
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const sdm::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const sdm::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const sdm::GenerationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
