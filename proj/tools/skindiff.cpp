// skindiff: command-line entry point for the tactile pose-hypothesis pipeline.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "skindiff/catalog.hpp"
#include "skindiff/checkpoint.hpp"
#include "skindiff/contact_synthesis.hpp"
#include "skindiff/ddpm.hpp"
#include "skindiff/evaluation.hpp"
#include "skindiff/experiment_spec.hpp"
#include "skindiff/io.hpp"
#include "skindiff/particle_filter.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skindiff;

namespace {

struct SensorOptions {
  double radius = 0.05;
  std::size_t taxels = 64;
  double rho = 0.005;
  double noise_std = 0.02;

  void add_to(CLI::App& cmd, bool with_taxels = true) {
    cmd.add_option("--radius", radius, "Sensor radius [m]")->check(CLI::PositiveNumber)->capture_default_str();
    if (with_taxels)
      cmd.add_option("--taxels", taxels, "Number of taxels")->check(CLI::Range(std::size_t{4}, std::size_t{1} << 20))->capture_default_str();
    cmd.add_option("--rho", rho, "Taxel proximity range [m]")->check(CLI::PositiveNumber)->capture_default_str();
    cmd.add_option("--noise-std", noise_std, "Activation noise std")->check(CLI::NonNegativeNumber)->capture_default_str();
  }
  TaxelArray array() const { return build_array(radius, taxels, rho, noise_std); }
};

struct Options {
  bool print_config = false;
  int verbosity = 0;

  std::string catalog = "data/catalog.jsonl";
  std::string object;

  // catalog
  std::string add_shape;
  bool list = false;

  // synth
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  double delta_max = 0.005;
  std::string out;
  SensorOptions sensor;

  // train
  std::string data;
  TrainConfig train;
  std::string loss_log;

  // sample / filter
  std::string checkpoint;
  std::string obs;
  std::size_t s = 100;

  std::string gt = "0,0,0";
  std::size_t contacts = 20;
  FilterConfig filter;
  std::string proposal = "ddpm";

  // eval
  std::string spec;
  bool train_missing = false;
  bool timing = false;
};

void log(const Options& o, const std::string& msg) {
  if (o.verbosity > 0) std::cerr << msg << '\n';
}

std::vector<double> parse_numbers(const std::string& text) {
  std::string cleaned = text;
  for (char& ch : cleaned)
    if (ch == ',') ch = ' ';
  std::istringstream in(cleaned);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw std::runtime_error("not a number: '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

Observation read_observation(const std::string& path) {
  std::string text;
  if (path == "-") {
    std::ostringstream s;
    s << std::cin.rdbuf();
    text = s.str();
  } else {
    text = read_file(path);
  }
  Observation z{parse_numbers(text)};
  for (double a : z.activations)
    if (!(a >= 0.0 && a <= 1.0)) throw std::runtime_error("observation activations must lie in [0, 1]");
  return z;
}

PlanarPose parse_pose(const std::string& text) {
  const auto v = parse_numbers(text);
  if (v.size() != 3) throw CLI::ValidationError("--gt", "expected x,y,theta");
  return PlanarPose::from_angle(v[0], v[1], v[2]);
}

DiffusionModel load_model(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

std::string pose_line(const PlanarPose& p) {
  return format_double(p.x) + ' ' + format_double(p.y) + ' ' + format_double(p.c) + ' ' + format_double(p.s);
}

void emit_config(const json& j) { std::cout << j.dump(2) << '\n'; }

json sensor_json(const SensorOptions& s, bool with_taxels = true) {
  json j = {{"radius", s.radius}, {"rho", s.rho}, {"noise_std", s.noise_std}};
  if (with_taxels) j["taxels"] = s.taxels;
  return j;
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},         {"batch_size", t.batch_size},   {"learning_rate", t.learning_rate},
          {"seed", t.seed},             {"hidden_width", t.hidden_width}, {"time_dim", t.time_dim},
          {"observation_noise_std", t.observation_noise_std}, {"T", kDefaultSteps},
          {"beta_start", kDefaultBetaStart}, {"beta_end", kDefaultBetaEnd}};
}

json filter_json(const FilterConfig& f) {
  return {{"n_particles", f.n_particles},       {"likelihood_std", f.likelihood_std},
          {"resample_period", f.resample_period}, {"initial_injection", f.initial_injection},
          {"injection_decay", f.injection_decay}, {"seed", f.seed}};
}

// ---------------------------------------------------------------------------

int cmd_catalog(const Options& o) {
  if (o.print_config) {
    emit_config({{"command", "catalog"}, {"catalog", o.catalog}, {"add", o.add_shape}});
    return 0;
  }
  ShapeCatalog cat = fs::exists(o.catalog) || o.add_shape.empty() ? ShapeCatalog::load(o.catalog) : ShapeCatalog{};
  if (!o.add_shape.empty()) {
    json doc;
    try {
      doc = json::parse(o.add_shape);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("--add: ") + e.what());
    }
    if (!doc.contains("name") || !doc.at("name").is_string()) throw ConfigError("--add: shape needs a string 'name'");
    cat.add(doc.at("name").get<std::string>(), shape_from_json(doc));
    write_file_atomic(o.catalog, cat.dump());
    log(o, "added " + doc.at("name").get<std::string>() + " to " + o.catalog);
  }
  for (const auto& [name, shape] : cat.shapes()) {
    const json j = shape_to_json(shape);
    std::cout << name << '\t' << j.at("kind").get<std::string>() << '\t' << format_double(bounding_radius(shape)) << '\n';
  }
  return 0;
}

int cmd_synth(const Options& o) {
  const json cfg = {{"command", "synth"}, {"catalog", o.catalog}, {"object", o.object}, {"n", o.n},
                    {"seed", o.seed},      {"delta_max", o.delta_max}, {"sensor", sensor_json(o.sensor)},
                    {"out", o.out}};
  if (o.print_config) {
    emit_config(cfg);
    return 0;
  }
  const ShapeCatalog cat = ShapeCatalog::load(o.catalog);
  const Shape& shape = cat.at(o.object);
  const TaxelArray array = o.sensor.array();
  SynthesisConfig sc;
  sc.n_samples = o.n;
  sc.seed = o.seed;
  sc.delta_max = o.delta_max;
  sc.bounds = SampleBounds::around_sensor(o.sensor.radius);
  const Dataset ds = synthesize_dataset(shape, array, sc);
  std::ostringstream body;
  write_dataset(body, {o.object, array.config_json(), array.config_hash(), o.seed, o.delta_max, o.n}, ds.records);
  write_file_atomic(o.out, body.str());
  log(o, "wrote " + std::to_string(ds.records.size()) + " records to " + o.out + " (" +
             std::to_string(ds.stats.attempts) + " attempts, " + std::to_string(ds.stats.rejected()) + " rejected)");
  return 0;
}

int cmd_train(const Options& o) {
  const json cfg = {{"command", "train"}, {"data", o.data}, {"out", o.out}, {"train", train_json(o.train)}};
  if (o.print_config) {
    emit_config(cfg);
    return 0;
  }
  std::ifstream in(o.data);
  if (!in) throw std::runtime_error("cannot open dataset " + o.data);
  const auto [header, records] = read_dataset(in);
  std::ostringstream losses;
  losses << "epoch,loss\n";
  const TrainResult r = train(records, default_schedule(), o.train, [&](std::size_t e, double loss) {
    losses << e << ',' << format_double(loss) << '\n';
    if (o.verbosity > 0 && (e % 10 == 0 || e + 1 == o.train.epochs))
      std::cerr << "epoch " << e << " loss " << loss << '\n';
  });
  write_file_atomic(o.out, serialize_checkpoint(r.model));
  if (!o.loss_log.empty()) write_file_atomic(o.loss_log, losses.str());
  log(o, "wrote checkpoint " + o.out);
  return 0;
}

int cmd_sample(const Options& o) {
  const json cfg = {{"command", "sample"}, {"checkpoint", o.checkpoint}, {"obs", o.obs}, {"s", o.s}, {"seed", o.seed}};
  if (o.print_config) {
    emit_config(cfg);
    return 0;
  }
  const DiffusionModel model = load_model(o.checkpoint);
  const Observation z = read_observation(o.obs);
  if (z.size() != model.n_taxels)
    throw ConfigError("observation has " + std::to_string(z.size()) + " activations; checkpoint expects " +
                      std::to_string(model.n_taxels));
  std::ostringstream body;
  for (const auto& p : sample(model, z, o.s, o.seed)) body << pose_line(p) << '\n';
  if (o.out.empty())
    std::cout << body.str();
  else
    write_file_atomic(o.out, body.str());
  return 0;
}

int cmd_filter(const Options& o) {
  FilterConfig fc = o.filter;
  fc.seed = o.seed;
  const json cfg = {{"command", "filter"}, {"catalog", o.catalog},   {"object", o.object},
                    {"checkpoint", o.checkpoint}, {"proposal", o.proposal}, {"gt", o.gt},
                    {"contacts", o.contacts}, {"filter", filter_json(fc)}, {"sensor", sensor_json(o.sensor, false)},
                    {"delta_max", o.delta_max}, {"out", o.out}};
  if (o.print_config) {
    emit_config(cfg);
    return 0;
  }
  fc.validate();
  const ShapeCatalog cat = ShapeCatalog::load(o.catalog);
  FilterProblem problem;
  problem.object = cat.at(o.object);
  problem.model_points = boundary_points(problem.object, kModelPoints);
  problem.contact_cfg.delta_max = o.delta_max;
  problem.contact_cfg.bounds = SampleBounds::around_sensor(o.sensor.radius);

  std::unique_ptr<DiffusionModel> model;
  SeededSampler proposal;
  std::size_t taxels = o.sensor.taxels;
  if (o.proposal == "ddpm") {
    if (o.checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "required for the ddpm proposal");
    model = std::make_unique<DiffusionModel>(load_model(o.checkpoint));
    taxels = model->n_taxels;
  }
  problem.array = build_array(o.sensor.radius, taxels, o.sensor.rho, o.sensor.noise_std);
  proposal = model ? ddpm_sampler(*model) : sdf_projection_sampler(problem.object, problem.array, problem.contact_cfg);

  const FilterRun run = run_filter(problem, proposal, parse_pose(o.gt), fc, o.contacts);
  const std::string log_text = filter_log(run);
  if (o.out.empty())
    std::cout << log_text;
  else
    write_file_atomic(o.out, log_text);
  return 0;
}

int cmd_eval(const Options& o) {
  const ExperimentSpec spec = load_experiment_spec(o.spec);
  if (o.print_config) {
    std::ifstream in(o.spec);
    json j = json::parse(in, nullptr, true, true);
    emit_config({{"command", "eval"}, {"spec", o.spec}, {"spec_hash", spec.hash}, {"train_missing", o.train_missing},
                 {"timing", o.timing}, {"effective", j}});
    return 0;
  }

  std::map<std::string, DiffusionModel> models;
  for (const auto& [object, res] : spec.required_models()) {
    const auto path = spec.checkpoint_for(object, res);
    const std::string key = ExperimentSpec::checkpoint_key(object, res);
    if (path && fs::exists(*path)) {
      models.emplace(key, load_model(path->string()));
      continue;
    }
    if (!o.train_missing) throw ConfigError("missing checkpoint for " + key + " (pass --train-missing to build it)");
    log(o, "training " + key);
    DiffusionModel m = train_model_for(spec.catalog.at(object), spec.sensor, res, spec.training,
                                       [&](std::size_t e, double loss) {
                                         if (o.verbosity > 1 && e % 10 == 0)
                                           std::cerr << key << " epoch " << e << " loss " << loss << '\n';
                                       });
    if (path) {
      fs::create_directories(path->parent_path());
      write_file_atomic(*path, serialize_checkpoint(m));
    }
    models.emplace(key, std::move(m));
  }
  auto lookup = [&](const std::string& object, std::size_t res) -> const DiffusionModel* {
    auto it = models.find(ExperimentSpec::checkpoint_key(object, res));
    return it == models.end() ? nullptr : &it->second;
  };

  fs::create_directories(spec.output_dir);
  if (spec.comparison) {
    log(o, "running sampler comparison");
    const auto rows = compare_samplers(*spec.comparison, lookup);
    write_file_atomic(spec.output_dir / "comparison.csv", comparison_csv(rows, spec.hash));
    std::cout << "object,resolution,method,seeds,median_of_best_median\n";
    for (const auto& [name, shape] : spec.comparison->objects)
      for (std::size_t res : spec.comparison->resolutions)
        for (ProposalMethod m : {ProposalMethod::sdf_projection, ProposalMethod::ddpm}) {
          std::vector<double> v;
          for (const auto& r : rows)
            if (r.object == name && r.resolution == res && r.method == m) v.push_back(r.best_median);
          std::cout << name << ',' << res << ',' << method_name(m) << ',' << v.size() << ','
                    << format_double(median_of(v)) << '\n';
        }
  }
  if (spec.filter) {
    log(o, "running filter convergence");
    const auto& f = *spec.filter;
    const auto traces = filter_convergence(f, *lookup(f.object_name, f.resolution));
    write_file_atomic(spec.output_dir / "convergence.csv", convergence_csv(traces, spec.hash));
    write_file_atomic(spec.output_dir / "convergence_summary.csv", convergence_summary_csv(traces, f.threshold, spec.hash));
    for (ProposalMethod m : {ProposalMethod::sdf_projection, ProposalMethod::ddpm})
      std::cout << "filter," << method_name(m) << ",median_contacts_to_threshold,"
                << format_double(median_contacts_to_threshold(traces, m)) << '\n';
  }
  if (o.timing) {
    // Wall-clock figures vary run to run, so they go to a separate file.
    std::ostringstream t;
    t << "# skindiff sampling time\n# spec_hash=" << spec.hash << "\nobject,resolution,s,mean_ms,stddev_ms,repetitions\n";
    for (const auto& [key, model] : models) {
      const Observation z{std::vector<double>(model.n_taxels, 0.0)};
      const TimingSummary ts = time_sampling(model, z, 100, 20);
      const auto at = key.find('@');
      t << key.substr(0, at) << ',' << key.substr(at + 1) << ",100," << format_double(ts.mean_ms) << ','
        << format_double(ts.stddev_ms) << ',' << ts.repetitions << '\n';
    }
    write_file_atomic(spec.output_dir / "timing.csv", t.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skindiff: diffusion-based tactile pose hypotheses and particle filtering"};
  app.require_subcommand(1);
  Options o;
  app.add_flag("--print-config", o.print_config, "Print the effective configuration as JSON and exit");
  app.add_flag("-v,--verbose", o.verbosity, "Progress messages on stderr (repeat for more)");

  auto* catalog = app.add_subcommand("catalog", "List shapes in a catalog, optionally adding one");
  catalog->add_option("--catalog", o.catalog, "Shape catalog (JSON lines)")->capture_default_str();
  catalog->add_option("--add", o.add_shape, "Shape JSON document with a 'name' to append");

  auto* synth = app.add_subcommand("synth", "Synthesize a contact dataset");
  synth->add_option("--catalog", o.catalog, "Shape catalog (JSON lines)")->capture_default_str();
  synth->add_option("--object", o.object, "Object name in the catalog")->required();
  synth->add_option("--n", o.n, "Number of records")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  synth->add_option("--delta-max", o.delta_max, "Maximum penetration depth [m]")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--out", o.out, "Output dataset path")->required();
  o.sensor.add_to(*synth);

  auto* train_cmd = app.add_subcommand("train", "Train the conditional diffusion model on a dataset");
  train_cmd->add_option("--data", o.data, "Dataset path")->required();
  train_cmd->add_option("--out", o.out, "Output checkpoint path")->required();
  train_cmd->add_option("--epochs", o.train.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--batch-size", o.train.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--lr", o.train.learning_rate)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--seed", o.train.seed)->capture_default_str();
  train_cmd->add_option("--hidden", o.train.hidden_width, "Hidden width")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--time-dim", o.train.time_dim)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--obs-noise", o.train.observation_noise_std, "Activation noise added to training inputs")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--loss-log", o.loss_log, "Write per-epoch losses as CSV");

  auto* sample_cmd = app.add_subcommand("sample", "Sample pose hypotheses for an observation");
  sample_cmd->add_option("--checkpoint", o.checkpoint)->required();
  sample_cmd->add_option("--obs", o.obs, "Activations file (whitespace or comma separated; '-' for stdin)")->required();
  sample_cmd->add_option("--s", o.s, "Number of hypotheses")->check(CLI::PositiveNumber)->capture_default_str();
  sample_cmd->add_option("--seed", o.seed)->capture_default_str();
  sample_cmd->add_option("--out", o.out, "Write poses here instead of stdout");

  auto* filter_cmd = app.add_subcommand("filter", "Run the particle filter on simulated contacts");
  filter_cmd->add_option("--catalog", o.catalog)->capture_default_str();
  filter_cmd->add_option("--object", o.object)->required();
  filter_cmd->add_option("--checkpoint", o.checkpoint, "Model for the ddpm proposal");
  filter_cmd->add_option("--proposal", o.proposal)->check(CLI::IsMember({"ddpm", "sdf"}))->capture_default_str();
  filter_cmd->add_option("--gt", o.gt, "Ground-truth object pose x,y,theta in the world frame")->capture_default_str();
  filter_cmd->add_option("--contacts", o.contacts)->capture_default_str();
  filter_cmd->add_option("--seed", o.seed)->capture_default_str();
  filter_cmd->add_option("--particles", o.filter.n_particles)->check(CLI::PositiveNumber)->capture_default_str();
  filter_cmd->add_option("--sigma-w", o.filter.likelihood_std, "Likelihood std")->check(CLI::PositiveNumber)->capture_default_str();
  filter_cmd->add_option("--resample-period", o.filter.resample_period)->check(CLI::PositiveNumber)->capture_default_str();
  filter_cmd->add_option("--inject", o.filter.initial_injection, "Injections at the first contact")->capture_default_str();
  filter_cmd->add_option("--decay", o.filter.injection_decay, "Injection decay per contact")->capture_default_str();
  filter_cmd->add_option("--delta-max", o.delta_max)->check(CLI::NonNegativeNumber)->capture_default_str();
  filter_cmd->add_option("--taxels", o.sensor.taxels, "Taxel count for the sdf proposal")->capture_default_str();
  filter_cmd->add_option("--out", o.out, "Write the JSON-lines log here instead of stdout");
  o.sensor.add_to(*filter_cmd, false);

  auto* eval = app.add_subcommand("eval", "Run the experiments described by a spec file");
  eval->add_option("--spec", o.spec)->required()->check(CLI::ExistingFile);
  eval->add_flag("--train-missing", o.train_missing, "Synthesize and train models whose checkpoints are missing");
  eval->add_flag("--timing", o.timing, "Also measure sampling time (written to timing.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*catalog) return cmd_catalog(o);
    if (*synth) return cmd_synth(o);
    if (*train_cmd) return cmd_train(o);
    if (*sample_cmd) return cmd_sample(o);
    if (*filter_cmd) return cmd_filter(o);
    if (*eval) return cmd_eval(o);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "skindiff: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "skindiff: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
