#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <thread>

#include "hide/alignment.hpp"
#include "hide/baselines.hpp"
#include "hide/detector.hpp"
#include "hide/error.hpp"
#include "hide/evaluation.hpp"
#include "hide/hsic.hpp"
#include "hide/kernels.hpp"
#include "hide/tensor_io.hpp"

namespace hide::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

const std::set<std::string> kKnownKeys = {
    "input",  "out",        "jobs",        "kernel",      "gamma",       "degree",     "coef0",  "period",
    "nu",     "estimator",  "align",       "budget",      "mmr_lambda",  "allow_fallback", "layer", "tau",
    "fallback", "fallback_threshold", "baselines", "temperature", "alpha", "measure", "score_name", "scores",
    "sweep",  "seed",       "pairs",       "dim",         "tokens",      "noise"};

const std::vector<std::string> kBaselineNames = {"mnll", "energy", "ln_entropy", "lexical_similarity", "eigenscore"};

/// Flag values that override the config file when given on the command line.
class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<T>();
    auto* opt = app->add_option(flag, *holder, help);
    steps_.push_back([opt, holder, key](json& s) {
      if (opt->count() > 0) s[key] = *holder;
    });
    return opt;
  }

  void apply(json& settings) const {
    for (const auto& step : steps_) step(settings);
  }

 private:
  std::vector<std::function<void(json&)>> steps_;
};

// Settings access -------------------------------------------------------------

template <class T>
T get(const json& s, const std::string& key, T fallback) {
  const auto it = s.find(key);
  if (it == s.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + it->dump());
  }
}

template <class T>
std::optional<T> get_opt(const json& s, const std::string& key) {
  const auto it = s.find(key);
  if (it == s.end() || it->is_null()) return std::nullopt;
  return get<T>(s, key, T{});
}

std::string require_string(const json& s, const std::string& key, const std::string& flag) {
  const auto v = get_opt<std::string>(s, key);
  if (!v || v->empty()) throw ConfigError("missing " + flag);
  return *v;
}

std::vector<std::string> string_list(const json& s, const std::string& key) {
  const auto it = s.find(key);
  if (it == s.end() || it->is_null()) return {};
  if (it->is_string()) return {it->get<std::string>()};
  return get<std::vector<std::string>>(s, key, {});
}

std::size_t get_count(const json& s, const std::string& key, std::size_t fallback) {
  const auto v = get<long long>(s, key, static_cast<long long>(fallback));
  if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  json s;
  try {
    s = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!s.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
  for (const auto& [key, value] : s.items()) {
    if (!kKnownKeys.contains(key)) throw ConfigError("config file " + path + ": unknown key '" + key + "'");
  }
  return s;
}

// Config resolution ---------------------------------------------------------------

KernelSpec resolve_kernel(const json& s) {
  KernelSpec k;
  const auto family = get<std::string>(s, "kernel", "rbf");
  const auto parsed = parse_kernel_family(family);
  if (!parsed) throw ConfigError("unknown kernel family '" + family + "'");
  k.family = *parsed;
  k.gamma = get<double>(s, "gamma", kDefaultGamma);
  k.degree = get<int>(s, "degree", 3);
  k.coef0 = get<double>(s, "coef0", 1.0);
  k.period = get<double>(s, "period", 1.0);
  const auto nu = get<std::string>(s, "nu", "3/2");
  const auto parsed_nu = parse_matern_nu(nu);
  if (!parsed_nu) throw ConfigError("unknown matern nu '" + nu + "' (expected 1/2, 3/2 or 5/2)");
  k.nu = *parsed_nu;
  k.validate();
  return k;
}

std::optional<LayerSelector> resolve_layer(const json& s) {
  const auto it = s.find("layer");
  if (it == s.end() || it->is_null()) return std::nullopt;
  if (it->is_number_integer()) return LayerSelector{it->get<std::int32_t>()};
  if (it->is_string()) {
    const auto text = it->get<std::string>();
    if (text == "mid") return LayerSelector{MidLayer{}};
    try {
      std::size_t used = 0;
      const int v = std::stoi(text, &used);
      if (used == text.size()) return LayerSelector{static_cast<std::int32_t>(v)};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("layer must be an index or 'mid', got " + it->dump());
}

DetectorConfig resolve_detector(const json& s) {
  DetectorConfig c;
  c.kernel = resolve_kernel(s);
  const auto est = get<std::string>(s, "estimator", "hide");
  const auto variant = parse_hsic_variant(est);
  if (!variant) throw ConfigError("unknown estimator '" + est + "'");
  c.estimator = *variant;
  const auto align = get<std::string>(s, "align", "keyword");
  const auto strategy = parse_alignment_strategy(align);
  if (!strategy) throw ConfigError("unknown alignment '" + align + "'");
  c.alignment.strategy = *strategy;
  c.alignment.token_budget = get_count(s, "budget", kDefaultTokenBudget);
  c.alignment.mmr_lambda = get<double>(s, "mmr_lambda", 0.5);
  c.alignment.allow_fallback = get<bool>(s, "allow_fallback", true);
  c.tau = get<double>(s, "tau", kDefaultTau);
  c.layer = resolve_layer(s);
  const auto fb = get<std::string>(s, "fallback", "report_zero");
  const auto fallback = parse_single_token_fallback(fb);
  if (!fallback) throw ConfigError("unknown single-token fallback '" + fb + "'");
  c.single_token_fallback = *fallback;
  c.fallback_mnll_threshold = get_opt<double>(s, "fallback_threshold");
  c.validate();
  return c;
}

json detector_json(const DetectorConfig& c) {
  json j;
  j["kernel"] = to_string(c.kernel.family);
  j["gamma"] = c.kernel.gamma;
  j["degree"] = c.kernel.degree;
  j["coef0"] = c.kernel.coef0;
  j["period"] = c.kernel.period;
  j["nu"] = to_string(c.kernel.nu);
  j["estimator"] = to_string(c.estimator);
  j["align"] = to_string(c.alignment.strategy);
  j["budget"] = c.alignment.token_budget;
  j["mmr_lambda"] = c.alignment.mmr_lambda;
  j["allow_fallback"] = c.alignment.allow_fallback;
  j["tau"] = c.tau;
  if (!c.layer) {
    j["layer"] = nullptr;
  } else if (const auto* idx = std::get_if<std::int32_t>(&*c.layer)) {
    j["layer"] = *idx;
  } else {
    j["layer"] = "mid";
  }
  j["fallback"] = to_string(c.single_token_fallback);
  j["fallback_threshold"] = c.fallback_mnll_threshold ? json(*c.fallback_mnll_threshold) : json(nullptr);
  return j;
}

unsigned resolve_jobs(const json& s) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const auto jobs = get<long long>(s, "jobs", static_cast<long long>(hw));
  if (jobs < 1) throw ConfigError("--jobs must be >= 1");
  return static_cast<unsigned>(jobs);
}

CorrectnessMeasure resolve_measure(const json& s) {
  const auto name = get<std::string>(s, "measure", "exact");
  const auto m = parse_correctness_measure(name);
  if (!m) throw ConfigError("unknown correctness measure '" + name + "' (expected exact, rouge or sim)");
  return *m;
}

std::string measure_key(CorrectnessMeasure m) {
  switch (m) {
    case CorrectnessMeasure::exact_match:
      return "exact";
    case CorrectnessMeasure::rouge_l_threshold:
      return "rouge";
    case CorrectnessMeasure::similarity_threshold:
      return "sim";
  }
  return "exact";
}

// I/O -----------------------------------------------------------------------------

struct LoadedRecords {
  std::vector<ExampleRecord> records;
  std::size_t skipped = 0;
};

LoadedRecords load_records(const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw ConfigError("missing --input");
  LoadedRecords out;
  for (const auto& input : inputs) {
    std::vector<fs::path> files;
    try {
      files = container_files(input);
    } catch (const fs::filesystem_error& e) {
      throw IoError(e.what());
    }
    for (const auto& file : files) {
      std::ifstream in(file, std::ios::binary);
      if (!in) throw IoError("cannot open " + file.string());
      ContainerReader reader(in);
      for (;;) {
        try {
          auto record = reader.next();
          if (!record) break;
          out.records.push_back(std::move(*record));
        } catch (const FormatError& e) {
          throw FormatError(e.kind(), file.string() + ": " + e.what());
        } catch (const ValidationError& e) {
          ++out.skipped;
          std::cerr << "warning: " << file.string() << ": skipping invalid record " << reader.records_read() << ": "
                    << e.what() << "\n";
        }
      }
    }
  }
  return out;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write to " + path + " failed");
}

std::string json_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

json number_or_null(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

json threshold_json(double tau) {
  if (std::isinf(tau)) return tau > 0 ? "inf" : "-inf";
  return tau;
}

json labels_json(const ExampleRecord& r) {
  json j;
  for (auto m : {CorrectnessMeasure::exact_match, CorrectnessMeasure::rouge_l_threshold,
                 CorrectnessMeasure::similarity_threshold}) {
    try {
      j[measure_key(m)] = label(r, m);
    } catch (const ValidationError&) {
      j[measure_key(m)] = nullptr;
    }
  }
  return j;
}

/// Runs `work` over every record on `jobs` threads and returns the results
/// in input order. Configuration errors abort the run; other per-record
/// errors are logged and the record is dropped.
std::vector<std::string> ordered_map(const std::vector<ExampleRecord>& records, unsigned jobs,
                                     const std::function<std::string(const ExampleRecord&)>& work,
                                     std::size_t& failed) {
  const std::size_t n = records.size();
  std::vector<std::optional<std::string>> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = work(records[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<std::string> lines;
  lines.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        ++failed;
        std::cerr << "warning: record " << records[i].id << " skipped: " << e.what() << "\n";
      }
      continue;
    }
    lines.push_back(std::move(*results[i]));
  }
  return lines;
}

void write_lines(const std::string& path, const json& config, const std::vector<std::string>& lines) {
  auto out = open_output(path);
  out << json_line(json{{"config", config}}) << "\n";
  for (const auto& line : lines) out << line << "\n";
  finish_output(out, path);
}

// Subcommands ---------------------------------------------------------------------

int cmd_score(const json& s) {
  const auto cfg = resolve_detector(s);
  const auto out_path = require_string(s, "out", "--out");
  const unsigned jobs = resolve_jobs(s);
  auto wanted = string_list(s, "baselines");
  if (wanted.size() == 1 && wanted[0] == "all") wanted = kBaselineNames;
  for (const auto& b : wanted) {
    if (std::find(kBaselineNames.begin(), kBaselineNames.end(), b) == kBaselineNames.end()) {
      throw ConfigError("unknown baseline '" + b + "'");
    }
  }
  const auto loaded = load_records(string_list(s, "input"));
  const std::string score_key(to_string(cfg.estimator));

  std::atomic<std::size_t> undetermined{0};
  std::size_t failed = loaded.skipped;
  const auto lines = ordered_map(
      loaded.records, jobs,
      [&](const ExampleRecord& r) {
        json line;
        line["id"] = r.id;
        json scores = json::object();
        std::optional<ScoreResult> sr;
        try {
          sr = hide_score(r, cfg);
        } catch (const UnsupportedSampleSize& e) {
          line["note"] = e.what();
        }
        const std::size_t n_eff =
            effective_budget(cfg.alignment.token_budget, r.input_hidden.rows(), r.output_hidden.rows());
        if (n_eff == 0) ++undetermined;
        scores[score_key] = sr ? json(sr->score) : json(nullptr);
        if (!wanted.empty()) {
          const auto b = compute_baselines(r);
          const std::map<std::string, std::optional<double>> named = {{"mnll", b.mnll},
                                                                      {"energy", b.energy},
                                                                      {"ln_entropy", b.ln_entropy},
                                                                      {"lexical_similarity", b.lexical_similarity},
                                                                      {"eigenscore", b.eigenscore}};
          for (const auto& name : wanted) scores[name] = number_or_null(named.at(name));
        }
        line["scores"] = std::move(scores);
        line["n_eff"] = n_eff;
        line["undetermined"] = n_eff == 0;
        line["labels"] = labels_json(r);
        return json_line(line);
      },
      failed);

  json config = detector_json(cfg);
  config["baselines"] = wanted;
  config["input"] = string_list(s, "input");
  write_lines(out_path, config, lines);
  std::cerr << "scored " << lines.size() << " records (" << undetermined.load() << " undetermined, " << failed
            << " skipped)\n";
  return kExitOk;
}

int cmd_baselines(const json& s) {
  const auto out_path = require_string(s, "out", "--out");
  const unsigned jobs = resolve_jobs(s);
  const double temperature = get<double>(s, "temperature", kDefaultEnergyTemperature);
  const double alpha = get<double>(s, "alpha", kDefaultEigenAlpha);
  if (!(temperature > 0.0)) throw ConfigError("--temperature must be positive");
  if (!(alpha > 0.0)) throw ConfigError("--alpha must be positive");
  const auto loaded = load_records(string_list(s, "input"));
  std::size_t failed = loaded.skipped;
  const auto lines = ordered_map(
      loaded.records, jobs,
      [&](const ExampleRecord& r) {
        const auto b = compute_baselines(r, temperature, alpha);
        if (b.eigenscore_clamped > 0) {
          std::cerr << "warning: record " + r.id + ": " + std::to_string(b.eigenscore_clamped) +
                           " eigenvalue(s) clamped to alpha\n";
        }
        json line;
        line["id"] = r.id;
        line["scores"] = {{"mnll", number_or_null(b.mnll)},
                          {"energy", number_or_null(b.energy)},
                          {"ln_entropy", number_or_null(b.ln_entropy)},
                          {"lexical_similarity", number_or_null(b.lexical_similarity)},
                          {"eigenscore", number_or_null(b.eigenscore)}};
        line["labels"] = labels_json(r);
        return json_line(line);
      },
      failed);
  json config{{"temperature", temperature}, {"alpha", alpha}, {"input", string_list(s, "input")}};
  write_lines(out_path, config, lines);
  std::cerr << "computed baselines for " << lines.size() << " records (" << failed << " skipped)\n";
  return kExitOk;
}

int cmd_detect(const json& s) {
  const auto cfg = resolve_detector(s);
  const auto out_path = require_string(s, "out", "--out");
  const unsigned jobs = resolve_jobs(s);
  const auto loaded = load_records(string_list(s, "input"));
  std::size_t failed = loaded.skipped;
  const auto lines = ordered_map(
      loaded.records, jobs,
      [&](const ExampleRecord& r) {
        const auto d = detect(r, cfg);
        json line;
        line["id"] = r.id;
        line["score"] = d.verdict == Verdict::undetermined ? json(nullptr) : json(d.score);
        line["verdict"] = to_string(d.verdict);
        line["n_eff"] = d.n_eff_used;
        line["fallback_used"] = d.fallback_used;
        return json_line(line);
      },
      failed);
  json config = detector_json(cfg);
  config["input"] = string_list(s, "input");
  write_lines(out_path, config, lines);
  std::cerr << "decided " << lines.size() << " records (" << failed << " skipped)\n";
  return kExitOk;
}

struct ScoreColumn {
  std::vector<ScoredExample> examples;
  Orientation orientation;
};

ScoreColumn read_scores(const json& s) {
  const auto path = require_string(s, "scores", "--scores");
  const auto name = get<std::string>(s, "score_name", "hide");
  const auto orientation = score_orientation(name);
  if (!orientation) throw ConfigError("no orientation registered for score '" + name + "'");
  const auto measure = resolve_measure(s);
  const auto key = measure_key(measure);

  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  ScoreColumn col{{}, *orientation};
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    json line;
    try {
      line = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": not JSON: " + e.what());
    }
    if (line.contains("config")) continue;
    const auto where = path + ":" + std::to_string(line_no);
    if (!line.contains("scores") || !line["scores"].contains(name)) {
      throw ValidationError(where + ": no score named '" + name + "'");
    }
    const auto& lab = line.contains("labels") ? line["labels"][key] : json(nullptr);
    if (!lab.is_boolean()) {
      throw ValidationError(where + ": no " + std::string(to_string(measure)) + " label (measure prerequisites missing)");
    }
    const auto& v = line["scores"][name];
    ScoredExample e{std::nullopt, lab.get<bool>()};
    if (v.is_number()) e.score = orient(*orientation, v.get<double>());
    col.examples.push_back(e);
  }
  if (in.bad()) throw IoError("read of " + path + " failed");
  return col;
}

/// Oriented thresholds map back to native units by the same flip.
double native_tau(Orientation o, double tau) { return o == Orientation::higher_is_correct ? tau : -tau; }

int cmd_evaluate(const json& s) {
  const auto out_path = require_string(s, "out", "--out");
  const auto col = read_scores(s);
  const auto report = evaluate(col.examples);
  json j;
  j["config"] = {{"scores", get<std::string>(s, "scores", "")},
                 {"score_name", get<std::string>(s, "score_name", "hide")},
                 {"measure", to_string(resolve_measure(s))}};
  j["orientation"] = col.orientation == Orientation::higher_is_correct ? "higher_is_correct"
                                                                       : "higher_is_hallucination";
  j["auc"] = report.auc;
  j["pcc"] = report.pcc;
  j["tau_star"] = threshold_json(native_tau(col.orientation, report.tau_star));
  j["gmean_at_tau"] = report.gmean_at_tau;
  j["counts"] = {{"positives", report.positives},
                 {"negatives", report.negatives},
                 {"undetermined", report.undetermined}};
  j["auc_with_undetermined"] = number_or_null(report.auc_with_undetermined);
  auto out = open_output(out_path);
  out << j.dump(2) << "\n";
  finish_output(out, out_path);
  std::cerr << "AUC " << report.auc << " over " << report.positives + report.negatives << " scored examples ("
            << report.undetermined << " undetermined)\n";
  return kExitOk;
}

int cmd_calibrate(const json& s) {
  const auto out_path = require_string(s, "out", "--out");
  const auto col = read_scores(s);
  std::vector<double> scores;
  std::vector<bool> labels;
  std::size_t undetermined = 0;
  for (const auto& e : col.examples) {
    if (!e.score) {
      ++undetermined;
      continue;
    }
    scores.push_back(*e.score);
    labels.push_back(e.correct);
  }
  const auto cal = calibrate_threshold(scores, labels);
  json j;
  j["config"] = {{"scores", get<std::string>(s, "scores", "")},
                 {"score_name", get<std::string>(s, "score_name", "hide")},
                 {"measure", to_string(resolve_measure(s))}};
  j["tau_star"] = threshold_json(native_tau(col.orientation, cal.tau_star));
  j["gmean"] = cal.gmean;
  j["scored"] = scores.size();
  j["undetermined"] = undetermined;
  auto out = open_output(out_path);
  out << j.dump(2) << "\n";
  finish_output(out, out_path);

  if (const auto sweep = get_opt<std::string>(s, "sweep")) {
    auto csv = open_output(*sweep);
    csv << "tau,tpr,fpr,gmean\n";
    csv.precision(17);
    for (const auto& p : cal.sweep) {
      const double tau = native_tau(col.orientation, p.tau);
      csv << tau << "," << p.tpr << "," << p.fpr << "," << p.gmean << "\n";
    }
    finish_output(csv, *sweep);
  }
  std::cerr << "tau* " << native_tau(col.orientation, cal.tau_star) << " gmean " << cal.gmean << "\n";
  return kExitOk;
}

int cmd_synth(const json& s) {
  SyntheticOptions o;
  o.seed = get<std::uint64_t>(s, "seed", 0);
  o.pairs = get_count(s, "pairs", 500);
  o.dim = get_count(s, "dim", 64);
  o.tokens = get_count(s, "tokens", 30);
  o.noise = get<double>(s, "noise", 0.1);
  const auto out_path = require_string(s, "out", "--out");
  const auto records = make_synthetic_benchmark(o);
  write_container(out_path, records);
  std::cerr << "wrote " << records.size() << " records to " << out_path << "\n";
  return kExitOk;
}

int cmd_inspect(const json& s) {
  const auto inputs = string_list(s, "input");
  if (inputs.empty()) throw ConfigError("missing --input");
  json report = json::array();
  std::size_t invalid_total = 0;
  for (const auto& input : inputs) {
    std::vector<fs::path> files;
    try {
      files = container_files(input);
    } catch (const fs::filesystem_error& e) {
      throw IoError(e.what());
    }
    for (const auto& file : files) {
      std::ifstream in(file, std::ios::binary);
      if (!in) throw IoError("cannot open " + file.string());
      ContainerReader reader(in);
      std::size_t valid = 0;
      std::size_t invalid = 0;
      std::set<std::size_t> dims;
      std::set<std::int32_t> layers;
      std::size_t undetermined = 0;
      for (;;) {
        try {
          auto r = reader.next();
          if (!r) break;
          ++valid;
          dims.insert(r->input_hidden.dim());
          layers.insert(r->layer);
          if (r->input_hidden.rows() == 0 || r->output_hidden.rows() == 0) ++undetermined;
        } catch (const FormatError& e) {
          throw FormatError(e.kind(), file.string() + ": " + e.what());
        } catch (const ValidationError& e) {
          ++invalid;
          std::cerr << file.string() << ": record " << reader.records_read() << ": " << e.what() << "\n";
        }
      }
      invalid_total += invalid;
      report.push_back({{"file", file.string()},
                        {"records", valid},
                        {"invalid", invalid},
                        {"empty_sequences", undetermined},
                        {"dims", dims},
                        {"layers", layers}});
    }
  }
  if (const auto out_path = get_opt<std::string>(s, "out")) {
    auto out = open_output(*out_path);
    out << report.dump(2) << "\n";
    finish_output(out, *out_path);
  } else {
    std::cout << report.dump(2) << "\n";
  }
  return invalid_total == 0 ? kExitOk : kExitValidation;
}

// Flag registration ---------------------------------------------------------------

void add_common(CLI::App* sub, Overrides& o, std::string& config_path) {
  sub->add_option("--config", config_path,
                  std::string("JSON settings file; flags override its values (default: $") + kConfigEnv + ")");
  o.add<long long>(sub, "--jobs,-j", "jobs", "Worker threads (default: available cores)");
}

void add_detector_flags(CLI::App* sub, Overrides& o) {
  o.add<std::string>(sub, "--kernel", "kernel",
                     "rbf|linear|polynomial|cosine|sigmoid|laplacian|exponential|periodic|matern");
  o.add<double>(sub, "--gamma", "gamma", "Kernel bandwidth (default 1e-5)");
  o.add<int>(sub, "--degree", "degree", "Polynomial degree (default 3)");
  o.add<double>(sub, "--coef0", "coef0", "Polynomial / sigmoid offset (default 1)");
  o.add<double>(sub, "--period", "period", "Periodic kernel period (default 1)");
  o.add<std::string>(sub, "--nu", "nu", "Matern smoothness 1/2|3/2|5/2 (default 3/2)");
  o.add<std::string>(sub, "--estimator", "estimator", "biased|unbiased|hide (default hide)");
  o.add<std::string>(sub, "--align", "align", "keyword|external|svd (default keyword)");
  o.add<long long>(sub, "--budget", "budget", "Token budget (default 20)");
  o.add<double>(sub, "--mmr-lambda", "mmr_lambda", "MMR relevance weight in [0,1] (default 0.5)");
  o.add<bool>(sub, "--allow-fallback", "allow_fallback",
              "Use MMR when external keyword ranks are missing (default true)");
  o.add<std::string>(sub, "--layer", "layer", "Expected layer: index or 'mid' (default: not checked)");
  o.add<double>(sub, "--tau", "tau", "Decision threshold (default 0.12)");
}

void add_input_output(CLI::App* sub, Overrides& o) {
  o.add<std::vector<std::string>>(sub, "--input,-i", "input", "Container file(s) or directories");
  o.add<std::string>(sub, "--out,-o", "out", "Output path");
}

void add_scores_flags(CLI::App* sub, Overrides& o) {
  o.add<std::string>(sub, "--scores", "scores", "Scores JSONL written by score or baselines");
  o.add<std::string>(sub, "--measure", "measure", "exact|rouge|sim (default exact)");
  o.add<std::string>(sub, "--score-name", "score_name", "Score column to evaluate (default hide)");
  o.add<std::string>(sub, "--out,-o", "out", "Report path");
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Hallucination detection from input/output hidden-state dependence", "hide-kit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  struct Sub {
    CLI::App* app;
    Overrides overrides;
    std::string config_path;
    std::function<int(const json&)> run;
  };
  std::vector<std::unique_ptr<Sub>> subs;
  auto make = [&](const char* name, const char* desc, std::function<int(const json&)> fn) {
    auto sub = std::make_unique<Sub>();
    sub->app = app.add_subcommand(name, desc);
    sub->run = std::move(fn);
    add_common(sub->app, sub->overrides, sub->config_path);
    subs.push_back(std::move(sub));
    return subs.back().get();
  };

  auto* score = make("score", "Dependence score per record (JSONL)", cmd_score);
  add_input_output(score->app, score->overrides);
  add_detector_flags(score->app, score->overrides);
  score->overrides.add<std::vector<std::string>>(score->app, "--baselines", "baselines",
                                                 "Also emit these baselines ('all' or names)");

  auto* base = make("baselines", "Baseline detector scores per record (JSONL)", cmd_baselines);
  add_input_output(base->app, base->overrides);
  base->overrides.add<double>(base->app, "--temperature", "temperature", "Energy temperature (default 1)");
  base->overrides.add<double>(base->app, "--alpha", "alpha", "EigenScore regularizer (default 1e-3)");

  auto* det = make("detect", "Thresholded verdict per record (JSONL)", cmd_detect);
  add_input_output(det->app, det->overrides);
  add_detector_flags(det->app, det->overrides);
  det->overrides.add<std::string>(det->app, "--fallback", "fallback",
                                  "Single-token handling: report_zero|fallback_perplexity");
  det->overrides.add<double>(det->app, "--fallback-threshold", "fallback_threshold",
                             "MNLL above this is a hallucination under the perplexity fallback");

  auto* cal = make("calibrate", "G-Mean threshold calibration", cmd_calibrate);
  add_scores_flags(cal->app, cal->overrides);
  cal->overrides.add<std::string>(cal->app, "--sweep", "sweep", "Also write the threshold sweep as CSV");

  auto* ev = make("evaluate", "AUC-ROC, PCC and calibrated threshold", cmd_evaluate);
  add_scores_flags(ev->app, ev->overrides);

  auto* syn = make("synth", "Write the synthetic coupled/decoupled benchmark", cmd_synth);
  syn->overrides.add<std::uint64_t>(syn->app, "--seed", "seed", "Generator seed (default 0)");
  syn->overrides.add<long long>(syn->app, "--pairs", "pairs", "Coupled/decoupled pairs (default 500)");
  syn->overrides.add<long long>(syn->app, "--dim", "dim", "Hidden width (default 64)");
  syn->overrides.add<long long>(syn->app, "--tokens", "tokens", "Tokens per sequence (default 30)");
  syn->overrides.add<double>(syn->app, "--noise", "noise", "Coupled noise scale (default 0.1)");
  syn->overrides.add<std::string>(syn->app, "--out,-o", "out", "Container path");

  auto* ins = make("inspect", "Validate containers and summarize them", cmd_inspect);
  add_input_output(ins->app, ins->overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (const auto& sub : subs) {
      if (sub->app->parsed()) failing = sub->app;
    }
    std::cerr << failing->help();
    return kExitValidation;
  }

  for (const auto& sub : subs) {
    if (!sub->app->parsed()) continue;
    try {
      json settings = json::object();
      std::string config_path = sub->config_path;
      if (config_path.empty()) {
        if (const char* env = std::getenv(kConfigEnv); env && *env) config_path = env;
      }
      if (!config_path.empty()) settings = load_config_file(config_path);
      sub->overrides.apply(settings);
      return sub->run(settings);
    } catch (const FormatError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitIo;
    } catch (const IoError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitIo;
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitValidation;
    }
  }
  return kExitValidation;
}

}  // namespace hide::cli
