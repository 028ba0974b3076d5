#include "hide/evaluation.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "hide/baselines.hpp"
#include "hide/error.hpp"

namespace hide {

namespace {

void check_inputs(std::span<const double> scores, const std::vector<bool>& labels, std::string_view who) {
  if (scores.size() != labels.size()) {
    throw ValidationError(std::string(who) + ": " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(labels.size()) + " labels");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw ValidationError(std::string(who) + ": NaN score");
  }
}

std::pair<std::size_t, std::size_t> class_counts(const std::vector<bool>& labels, std::string_view who) {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw ValidationError(std::string(who) + " is undefined with a single class (" + std::to_string(pos) +
                          " correct, " + std::to_string(neg) + " incorrect)");
  }
  return {pos, neg};
}

std::string strip_punct_lower(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(std::move(w));
  return words;
}

// Synthetic generator -------------------------------------------------------

using Rng = std::mt19937_64;

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n01;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n01(rng);
  }
  return m;
}

Eigen::MatrixXd random_rotation(Rng& rng, Eigen::Index d) {
  const Eigen::MatrixXd a = gaussian(rng, d, d);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Eigen::MatrixXd topic_rows(Rng& rng, Eigen::Index tokens, Eigen::Index d) {
  std::uniform_int_distribution<int> topics_dist(2, 6);
  std::normal_distribution<double> n01;
  const int topics = topics_dist(rng);
  Eigen::MatrixXd centroids = gaussian(rng, topics, d);
  for (int t = 0; t < topics; ++t) centroids.row(t) *= std::exp(0.5 * n01(rng));
  std::uniform_int_distribution<int> pick(0, topics - 1);
  Eigen::MatrixXd rows(tokens, d);
  for (Eigen::Index i = 0; i < tokens; ++i) rows.row(i) = centroids.row(pick(rng));
  rows += 0.3 * gaussian(rng, tokens, d);
  return rows;
}

double rms(const Eigen::MatrixXd& m) { return std::sqrt(m.squaredNorm() / static_cast<double>(m.size())); }

HiddenMatrix to_hidden(const Eigen::MatrixXd& m) {
  HiddenMatrix h(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      h(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = static_cast<float>(m(i, j));
    }
  }
  return h;
}

std::vector<std::string> words(Rng& rng, std::size_t count, char prefix) {
  std::uniform_int_distribution<int> vocab(0, 999);
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(prefix + std::to_string(vocab(rng)));
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

std::vector<double> logprobs(Rng& rng, std::size_t count) {
  std::exponential_distribution<double> e(2.0);
  std::vector<double> out(count);
  for (double& v : out) v = -e(rng);
  return out;
}

ExampleRecord synth_record(Rng& rng, std::string id, const Eigen::MatrixXd& input, const Eigen::MatrixXd& output,
                           bool coupled) {
  const auto tokens = static_cast<std::size_t>(input.rows());
  const auto d = static_cast<std::size_t>(input.cols());
  ExampleRecord r;
  r.id = std::move(id);
  r.layer = 16;
  r.num_layers = 32;
  r.prompt_tokens = words(rng, tokens, 'p');
  r.output_tokens = words(rng, static_cast<std::size_t>(output.rows()), 'w');
  r.output_text = join(r.output_tokens);
  r.input_hidden = to_hidden(input);
  r.output_hidden = to_hidden(output);
  r.output_logprobs = logprobs(rng, r.output_tokens.size());

  std::normal_distribution<double> n01;
  std::vector<float> logits(64);
  for (float& l : logits) l = static_cast<float>(3.0 * n01(rng));
  r.final_input_logits = std::move(logits);

  const Eigen::RowVectorXd pooled = output.colwise().mean();
  for (int g = 0; g < 2; ++g) {
    GenerationRecord gen;
    gen.tokens = r.output_tokens;
    std::uniform_int_distribution<std::size_t> slot(0, gen.tokens.size() - 1);
    gen.tokens[slot(rng)] = "v" + std::to_string(g);
    gen.logprobs = logprobs(rng, gen.tokens.size());
    gen.text = join(gen.tokens);
    gen.pooled_hidden.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      gen.pooled_hidden[j] = static_cast<float>(pooled(static_cast<Eigen::Index>(j)) + 0.1 * n01(rng));
    }
    r.extra_generations.push_back(std::move(gen));
  }

  std::uniform_real_distribution<double> u01;
  if (coupled) {
    r.references = {r.output_text};
    r.precomputed_similarity = 0.91 + 0.09 * u01(rng);
  } else {
    r.references = {join(words(rng, 3, 'r'))};
    r.precomputed_similarity = -0.2 + u01(rng);
  }
  return r;
}

std::string pair_id(std::size_t p, const char* kind) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "synth-%06zu-%s", p, kind);
  return buf;
}

}  // namespace

std::string_view to_string(CorrectnessMeasure measure) {
  switch (measure) {
    case CorrectnessMeasure::exact_match:
      return "exact_match";
    case CorrectnessMeasure::rouge_l_threshold:
      return "rouge_l_threshold";
    case CorrectnessMeasure::similarity_threshold:
      return "similarity_threshold";
  }
  return "unknown";
}

std::optional<CorrectnessMeasure> parse_correctness_measure(std::string_view name) {
  if (name == "exact" || name == "exact_match") return CorrectnessMeasure::exact_match;
  if (name == "rouge" || name == "rouge_l_threshold") return CorrectnessMeasure::rouge_l_threshold;
  if (name == "sim" || name == "similarity_threshold") return CorrectnessMeasure::similarity_threshold;
  return std::nullopt;
}

std::string normalize_answer(std::string_view text) {
  auto w = split_ws(strip_punct_lower(text));
  if (!w.empty() && (w.front() == "a" || w.front() == "an" || w.front() == "the")) w.erase(w.begin());
  return join(w);
}

std::vector<std::string> rouge_tokens(std::string_view text) { return split_ws(strip_punct_lower(text)); }

bool label(const ExampleRecord& record, CorrectnessMeasure measure) {
  switch (measure) {
    case CorrectnessMeasure::exact_match: {
      if (record.references.empty()) throw ValidationError("exact_match needs references (record " + record.id + ")");
      const auto gen = normalize_answer(record.generation_text());
      return std::any_of(record.references.begin(), record.references.end(),
                         [&](const std::string& ref) { return normalize_answer(ref) == gen; });
    }
    case CorrectnessMeasure::rouge_l_threshold: {
      if (record.references.empty()) {
        throw ValidationError("rouge_l_threshold needs references (record " + record.id + ")");
      }
      const auto gen = rouge_tokens(record.generation_text());
      double best = 0.0;
      for (const auto& ref : record.references) best = std::max(best, rouge_l(gen, rouge_tokens(ref)));
      return best > kRougeCutoff;
    }
    case CorrectnessMeasure::similarity_threshold:
      if (!record.precomputed_similarity) {
        throw ValidationError("similarity_threshold needs precomputed_similarity (record " + record.id + ")");
      }
      return *record.precomputed_similarity > kSimilarityCutoff;
  }
  throw ConfigError("unknown correctness measure");
}

double auc_roc(std::span<const double> scores, const std::vector<bool>& labels) {
  check_inputs(scores, labels, "auc_roc");
  const auto [pos, neg] = class_counts(labels, "AUC");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // 2 * wins + ties, accumulated in integers.
  std::uint64_t twice = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0;
    std::uint64_t gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      labels[order[j]] ? ++gp : ++gn;
      ++j;
    }
    twice += 2 * gp * neg_below + gp * gn;
    neg_below += gn;
    i = j;
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double pcc(std::span<const double> scores, const std::vector<bool>& labels) {
  check_inputs(scores, labels, "pcc");
  // Welford co-moment updates.
  double mx = 0.0;
  double my = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double k = static_cast<double>(i + 1);
    const double x = scores[i];
    const double y = labels[i] ? 1.0 : 0.0;
    const double dx = x - mx;
    const double dy = y - my;
    mx += dx / k;
    my += dy / k;
    sxx += dx * (x - mx);
    syy += dy * (y - my);
    sxy += dx * (y - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw ValidationError("PCC is undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Calibration calibrate_threshold(std::span<const double> scores, const std::vector<bool>& labels) {
  check_inputs(scores, labels, "calibrate_threshold");
  const auto [pos, neg] = class_counts(labels, "threshold calibration");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  const double p = static_cast<double>(pos);
  const double q = static_cast<double>(neg);
  Calibration out{0.0, -1.0, {}};
  // Ranked by the integer product tp * tn so that exact ties stay ties.
  std::uint64_t best = 0;
  auto push = [&](double tau, std::size_t pos_below, std::size_t neg_below) {
    const std::uint64_t tp = pos - pos_below;
    const std::uint64_t tn = neg_below;
    const double tpr = static_cast<double>(tp) / p;
    const double fpr = static_cast<double>(neg - neg_below) / q;
    const double g = std::sqrt(static_cast<double>(tp * tn) / (p * q));
    out.sweep.push_back({tau, tpr, fpr, g});
    if (out.gmean < 0.0 || tp * tn > best) {
      best = tp * tn;
      out.gmean = g;
      out.tau_star = tau;
    }
  };

  push(-std::numeric_limits<double>::infinity(), 0, 0);
  std::size_t pos_below = 0;
  std::size_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      labels[order[j]] ? ++pos_below : ++neg_below;
      ++j;
    }
    double tau = std::numeric_limits<double>::infinity();
    if (j < order.size()) {
      // Adjacent doubles have no midpoint strictly between them; the upper one still splits correctly.
      tau = (scores[order[i]] + scores[order[j]]) / 2.0;
      if (tau <= scores[order[i]]) tau = scores[order[j]];
    }
    push(tau, pos_below, neg_below);
    i = j;
  }
  return out;
}

EvalReport evaluate(std::span<const ScoredExample> examples) {
  EvalReport report;
  std::vector<double> scores;
  std::vector<bool> labels;
  std::vector<double> all_scores;
  std::vector<bool> all_labels;
  for (const auto& e : examples) {
    all_scores.push_back(e.score ? *e.score : -std::numeric_limits<double>::infinity());
    all_labels.push_back(e.correct);
    if (!e.score) {
      ++report.undetermined;
      continue;
    }
    scores.push_back(*e.score);
    labels.push_back(e.correct);
    e.correct ? ++report.positives : ++report.negatives;
  }
  report.auc = auc_roc(scores, labels);
  report.pcc = pcc(scores, labels);
  const auto cal = calibrate_threshold(scores, labels);
  report.tau_star = cal.tau_star;
  report.gmean_at_tau = cal.gmean;
  report.auc_with_undetermined = auc_roc(all_scores, all_labels);
  return report;
}

std::vector<ExampleRecord> make_synthetic_benchmark(const SyntheticOptions& options) {
  if (options.pairs < 2) throw ValidationError("synthetic benchmark needs at least 2 pairs");
  if (options.dim < 1 || options.tokens < 1) throw ValidationError("synthetic benchmark needs dim, tokens >= 1");
  if (!(options.noise >= 0.0) || !std::isfinite(options.noise)) {
    throw ValidationError("synthetic noise must be a finite value >= 0");
  }
  Rng rng(options.seed);
  const auto t = static_cast<Eigen::Index>(options.tokens);
  const auto d = static_cast<Eigen::Index>(options.dim);

  std::vector<ExampleRecord> out;
  out.reserve(2 * options.pairs);
  for (std::size_t p = 0; p < options.pairs; ++p) {
    const Eigen::MatrixXd x = topic_rows(rng, t, d);
    const Eigen::MatrixXd rot = random_rotation(rng, d);
    std::vector<Eigen::Index> perm(options.tokens);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd shuffled(t, d);
    for (Eigen::Index i = 0; i < t; ++i) shuffled.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd coupled = shuffled * rot.transpose() + options.noise * rms(x) * gaussian(rng, t, d);
    out.push_back(synth_record(rng, pair_id(p, "coupled"), x, coupled, true));

    const Eigen::MatrixXd x2 = topic_rows(rng, t, d);
    const Eigen::MatrixXd decoupled = rms(x2) * gaussian(rng, t, d);
    out.push_back(synth_record(rng, pair_id(p, "decoupled"), x2, decoupled, false));
  }
  return out;
}

}  // namespace hide
