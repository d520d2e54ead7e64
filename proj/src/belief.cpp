#include "lidm/belief.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lidm {

nlohmann::json TrackerConfig::to_json() const {
  return {{"embed_dim", embed_dim}, {"filters", filters}, {"max_width", max_width}, {"hidden", hidden},
          {"init_recurrence", init_recurrence}};
}

TrackerConfig TrackerConfig::from_json(const nlohmann::json& j) {
  TrackerConfig c;
  if (j.contains("embed_dim")) c.embed_dim = j.at("embed_dim").get<int>();
  if (j.contains("filters")) c.filters = j.at("filters").get<int>();
  if (j.contains("max_width")) c.max_width = j.at("max_width").get<int>();
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<int>();
  if (j.contains("init_recurrence")) c.init_recurrence = j.at("init_recurrence").get<double>();
  return c;
}

BeliefTracker::BeliefTracker(const Ontology& ontology, int vocab_size, const TrackerConfig& config,
                             std::uint64_t seed)
    : ontology_(ontology), config_(config) {
  if (vocab_size <= 0) throw std::invalid_argument("BeliefTracker: empty vocabulary");
  create(vocab_size, seed);
  bind();
}

BeliefTracker::BeliefTracker(const Ontology& ontology, const TrackerConfig& config, ParamStore params)
    : ontology_(ontology), config_(config), params_(std::move(params)) {
  bind();
}

BeliefTracker::BeliefTracker(const BeliefTracker& other)
    : ontology_(other.ontology_), config_(other.config_), params_(other.params_) {
  bind();
}

BeliefTracker& BeliefTracker::operator=(const BeliefTracker& other) {
  if (this != &other) {
    ontology_ = other.ontology_;
    config_ = other.config_;
    params_ = other.params_;
    bind();
  }
  return *this;
}

void BeliefTracker::create(int vocab_size, std::uint64_t seed) {
  Rng rng(seed);
  const auto g = ParamGroup::tracker;
  const auto& c = config_;
  nn::Embedding::create(params_, "tracker/embed", g, vocab_size, c.embed_dim, rng);
  const Eigen::Index feat = 2LL * c.max_width * c.filters;
  for (const auto& slot : ontology_.informable_slots) {
    const std::string p = "tracker/" + slot;
    nn::ConvPool::create(params_, p + "/user", g, c.embed_dim, c.max_width, c.filters, rng);
    nn::ConvPool::create(params_, p + "/machine", g, c.embed_dim, c.max_width, c.filters, rng);
    nn::Linear::create(params_, p + "/hidden", g, feat, c.hidden, rng);
    params_.add(p + "/mention", g, uniform_matrix(c.hidden, 2, 1.0, rng));
    params_.add(p + "/value_out", g, uniform_matrix(1, c.hidden, std::sqrt(6.0 / (c.hidden + 1.0)), rng));
    nn::Linear::create(params_, p + "/special", g, feat + 2, 2, rng);
    params_.add(p + "/recurrence", g, Matrix::Constant(1, 1, c.init_recurrence));
  }
  nn::ConvPool::create(params_, "tracker/request/cnn", g, c.embed_dim, c.max_width, c.filters, rng);
  nn::Linear::create(params_, "tracker/request/out", g, static_cast<Eigen::Index>(c.max_width) * c.filters,
                     static_cast<Eigen::Index>(ontology_.requestable_slots.size()), rng);
}

void BeliefTracker::bind() {
  embed_ = nn::Embedding::bind(params_, "tracker/embed");
  slots_.clear();
  for (const auto& slot : ontology_.informable_slots) {
    const std::string p = "tracker/" + slot;
    SlotNet s;
    s.user_cnn = nn::ConvPool::bind(params_, p + "/user", config_.max_width);
    s.machine_cnn = nn::ConvPool::bind(params_, p + "/machine", config_.max_width);
    s.hidden = nn::Linear::bind(params_, p + "/hidden");
    s.mention = &params_.at(p + "/mention");
    s.value_out = &params_.at(p + "/value_out");
    s.special = nn::Linear::bind(params_, p + "/special");
    s.recurrence = &params_.at(p + "/recurrence");
    slots_.push_back(s);
  }
  request_cnn_ = nn::ConvPool::bind(params_, "tracker/request/cnn", config_.max_width);
  request_out_ = nn::Linear::bind(params_, "tracker/request/out");
}

// <s> w1 .. wn </s>, padded with </s> so the widest filter fits.
std::vector<ad::Var> BeliefTracker::embed_padded(ad::Tape& tape, const TokenIds& ids) const {
  embed_.check(ids);
  std::vector<ad::Var> xs;
  xs.reserve(ids.size() + static_cast<std::size_t>(config_.max_width) + 1);
  xs.push_back(embed_.lookup(tape, 0));
  for (int id : ids) xs.push_back(embed_.lookup(tape, id));
  xs.push_back(embed_.lookup(tape, 1));
  while (xs.size() < static_cast<std::size_t>(config_.max_width)) xs.push_back(embed_.lookup(tape, 1));
  return xs;
}

namespace {

Matrix mention_flags(const Ontology& ontology, const std::string& slot, const LexicalMap& user_map,
                     const LexicalMap& machine_map) {
  const auto& values = ontology.values.at(slot);
  Matrix m = Matrix::Zero(2, static_cast<Eigen::Index>(values.size()));
  auto mark = [&](const LexicalMap& map, Eigen::Index row) {
    for (const auto& sub : map) {
      if (sub.slot != slot) continue;
      auto idx = ontology.value_index(slot, sub.value);
      if (idx && static_cast<std::size_t>(*idx) < values.size()) m(row, *idx) = 1.0;
    }
  };
  mark(user_map, 0);
  mark(machine_map, 1);
  return m;
}

}  // namespace

BeliefTracker::Output BeliefTracker::forward(ad::Tape& tape, const TrackerTurn& turn,
                                             const BeliefState& prev) const {
  if (prev.informable.size() != ontology_.informable_slots.size()) {
    throw std::invalid_argument("BeliefTracker: previous belief has the wrong number of slots");
  }
  const auto xu = embed_padded(tape, turn.user);
  const auto xm = embed_padded(tape, turn.prev_response);
  Output out;
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const SlotNet& net = slots_[s];
    const std::string& slot = ontology_.informable_slots[s];
    const Vector& prev_slot = prev.informable[s];
    const auto n = static_cast<Eigen::Index>(ontology_.values.at(slot).size());
    if (prev_slot.size() != n + 2) throw std::invalid_argument("BeliefTracker: previous belief size mismatch");

    ad::Var f = ad::concat({net.user_cnn(tape, xu), net.machine_cnn(tape, xm)});
    std::vector<ad::Var> parts;
    if (n > 0) {
      ad::Var base = ad::matmul(net.hidden(tape, f), tape.constant(Matrix::Ones(1, n)));
      ad::Var flags = tape.constant(mention_flags(ontology_, slot, turn.user_map, turn.prev_response_map));
      ad::Var h = ad::tanh(base + ad::matmul(tape.param(*net.mention), flags));
      parts.push_back(ad::transpose(ad::matmul(tape.param(*net.value_out), h)));
    }
    parts.push_back(net.special(tape, ad::concat({f, tape.constant(Matrix(prev_slot.tail(2)))})));
    ad::Var logits = ad::concat(parts) + ad::matmul(tape.constant(Matrix(prev_slot)), tape.param(*net.recurrence));
    out.slot_log_probs.push_back(ad::log_softmax(logits));
  }
  out.request_logits = request_out_(tape, request_cnn_(tape, xu));
  return out;
}

BeliefState BeliefTracker::track(const TrackerTurn& turn, const BeliefState& prev) const {
  if (turn.user.empty() && turn.prev_response.empty()) {
    if (!prev.valid()) throw std::invalid_argument("BeliefTracker: previous belief is not valid");
    return prev;
  }
  ad::Tape tape;
  const Output out = forward(tape, turn, prev);
  BeliefState b;
  for (const auto& lp : out.slot_log_probs) b.informable.emplace_back(lp.value().array().exp().matrix());
  const Matrix& r = out.request_logits.value();
  b.requestable = (1.0 / (1.0 + (-r.array()).exp())).matrix();
  return b;
}

ad::Var BeliefTracker::loss(ad::Tape& tape, const Output& out, const TrackerLabels& labels) const {
  std::vector<ad::Var> terms;
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const std::string& slot = ontology_.informable_slots[s];
    auto it = labels.slot_labels.find(slot);
    if (it == labels.slot_labels.end()) continue;
    auto idx = ontology_.value_index(slot, it->second);
    if (!idx) continue;  // value outside the ontology: no target for this slot
    terms.push_back(ad::scale(ad::pick(out.slot_log_probs[s], *idx), -1.0));
  }
  const Matrix& rl = out.request_logits.value();
  Matrix y = Matrix::Zero(rl.rows(), 1);
  for (std::size_t r = 0; r < ontology_.requestable_slots.size(); ++r) {
    if (labels.requested.count(ontology_.requestable_slots[r])) y(static_cast<Eigen::Index>(r), 0) = 1.0;
  }
  // -[y log sigmoid(l) + (1 - y) log sigmoid(-l)]
  ad::Var pos = ad::log(ad::sigmoid(out.request_logits));
  ad::Var neg = ad::log(ad::sigmoid(ad::scale(out.request_logits, -1.0)));
  ad::Var bce = ad::dot(tape.constant(y), pos) + ad::dot(tape.constant(Matrix(1.0 - y.array())), neg);
  terms.push_back(ad::scale(bce, -1.0));
  return ad::sum(ad::concat(terms));
}

TrackerDialogue tracker_dialogue(const DialogueRecord& record, const Vocabulary& vocab) {
  TrackerDialogue d;
  d.dialogue_id = record.dialogue_id;
  const Turn* prev = nullptr;
  for (const Turn& t : record.turns) {
    TrackerTurn tt;
    tt.user = vocab.encode(t.delex_user);
    tt.user_map = t.user_map;
    if (prev) {
      tt.prev_response = vocab.encode(prev->delex_response);
      tt.prev_response_map = prev->response_map;
    }
    d.turns.push_back(std::move(tt));
    d.labels.push_back({t.slot_labels, t.requested});
    prev = &t;
  }
  return d;
}

std::vector<BeliefState> track_dialogue(const BeliefTracker& tracker, const TrackerDialogue& dialogue) {
  std::vector<BeliefState> out;
  BeliefState b = BeliefState::initial(tracker.ontology());
  for (const auto& turn : dialogue.turns) {
    b = tracker.track(turn, b);
    out.push_back(b);
  }
  return out;
}

void check_annotations(const std::vector<DialogueRecord>& records, const Ontology& ontology) {
  std::vector<std::string> bad;
  for (const auto& r : records) {
    bool ok = true;
    for (const auto& t : r.turns) {
      for (const auto& slot : ontology.informable_slots) {
        if (!t.slot_labels.count(slot)) ok = false;
      }
    }
    if (!ok) bad.push_back(r.dialogue_id);
  }
  if (!bad.empty()) {
    std::string ids;
    for (const auto& id : bad) ids += (ids.empty() ? "" : ", ") + id;
    throw TrackerError("turns without slot annotations in dialogues: " + ids);
  }
}

namespace {

std::vector<TrackerDialogue> to_tracker_dialogues(const std::vector<DialogueRecord>& records,
                                                  const Vocabulary& vocab) {
  std::vector<TrackerDialogue> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(tracker_dialogue(r, vocab));
  return out;
}

// Trains on one dialogue, feeding each turn the tracker's own previous output.
double train_dialogue(BeliefTracker& tracker, const TrackerDialogue& d, Adam& adam) {
  auto params = tracker.params().select(in_group(ParamGroup::tracker));
  BeliefState b = BeliefState::initial(tracker.ontology());
  double total = 0.0;
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    ad::Tape tape(in_group(ParamGroup::tracker));
    const auto out = tracker.forward(tape, d.turns[t], b);
    ad::Var loss = tracker.loss(tape, out, d.labels[t]);
    total += loss.scalar();
    tape.backward(loss);
    if (grads_finite(params)) {
      clip_grad_norm(params, 5.0);
      adam.step(params);
    } else {
      tracker.params().zero_grad();
    }
    BeliefState next;
    for (const auto& lp : out.slot_log_probs) next.informable.emplace_back(lp.value().array().exp().matrix());
    const Matrix& r = out.request_logits.value();
    next.requestable = (1.0 / (1.0 + (-r.array()).exp())).matrix();
    b = std::move(next);
  }
  return total;
}

}  // namespace

double tracker_loss(const BeliefTracker& tracker, const std::vector<TrackerDialogue>& dialogues) {
  double total = 0.0;
  std::size_t turns = 0;
  for (const auto& d : dialogues) {
    BeliefState b = BeliefState::initial(tracker.ontology());
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      ad::Tape tape;
      const auto out = tracker.forward(tape, d.turns[t], b);
      total += tracker.loss(tape, out, d.labels[t]).scalar();
      ++turns;
      BeliefState next;
      for (const auto& lp : out.slot_log_probs) next.informable.emplace_back(lp.value().array().exp().matrix());
      const Matrix& r = out.request_logits.value();
      next.requestable = (1.0 / (1.0 + (-r.array()).exp())).matrix();
      b = std::move(next);
    }
  }
  return turns ? total / static_cast<double>(turns) : 0.0;
}

TrackerTrainReport pretrain_trackers(BeliefTracker& tracker, const std::vector<DialogueRecord>& train,
                                     const std::vector<DialogueRecord>& valid, const Vocabulary& vocab,
                                     const TrackerTrainConfig& config) {
  check_annotations(train, tracker.ontology());
  check_annotations(valid, tracker.ontology());
  const auto train_d = to_tracker_dialogues(train, vocab);
  const auto valid_d = to_tracker_dialogues(valid.empty() ? train : valid, vocab);

  TrackerTrainReport report;
  report.initial_valid_loss = tracker_loss(tracker, valid_d);
  if (config.epochs <= 0) return report;

  Adam adam(config.learning_rate);
  Rng rng(config.seed);
  std::vector<std::size_t> order(train_d.size());
  std::iota(order.begin(), order.end(), 0);
  double best = report.initial_valid_loss;
  auto best_params = tracker.params().snapshot();
  int since_best = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t turns = 0;
    for (std::size_t i : order) {
      total += train_dialogue(tracker, train_d[i], adam);
      turns += train_d[i].turns.size();
    }
    report.train_loss.push_back(turns ? total / static_cast<double>(turns) : 0.0);
    const double v = tracker_loss(tracker, valid_d);
    report.valid_loss.push_back(v);
    if (v < best) {
      best = v;
      best_params = tracker.params().snapshot();
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  tracker.params().restore(best_params);
  return report;
}

TrackerAccuracy tracker_accuracy(const BeliefTracker& tracker, const std::vector<DialogueRecord>& records,
                                 const Vocabulary& vocab) {
  const Ontology& ont = tracker.ontology();
  std::map<std::string, std::size_t> correct;
  std::map<std::string, std::size_t> counted;
  std::size_t req_correct = 0;
  std::size_t req_counted = 0;
  TrackerAccuracy acc;
  for (const auto& r : records) {
    const auto d = tracker_dialogue(r, vocab);
    const auto beliefs = track_dialogue(tracker, d);
    for (std::size_t t = 0; t < beliefs.size(); ++t) {
      ++acc.turns;
      for (std::size_t s = 0; s < ont.informable_slots.size(); ++s) {
        const auto& slot = ont.informable_slots[s];
        auto it = d.labels[t].slot_labels.find(slot);
        if (it == d.labels[t].slot_labels.end()) continue;
        auto idx = ont.value_index(slot, it->second);
        if (!idx) continue;
        Eigen::Index best = 0;
        beliefs[t].informable[s].maxCoeff(&best);
        ++counted[slot];
        if (best == *idx) ++correct[slot];
      }
      for (std::size_t q = 0; q < ont.requestable_slots.size(); ++q) {
        const bool want = d.labels[t].requested.count(ont.requestable_slots[q]) > 0;
        const bool got = beliefs[t].requestable(static_cast<Eigen::Index>(q)) > 0.5;
        ++req_counted;
        if (want == got) ++req_correct;
      }
    }
  }
  for (const auto& slot : ont.informable_slots) {
    acc.per_slot[slot] = counted[slot] ? static_cast<double>(correct[slot]) / static_cast<double>(counted[slot]) : 0.0;
  }
  acc.requestable = req_counted ? static_cast<double>(req_correct) / static_cast<double>(req_counted) : 0.0;
  return acc;
}

}  // namespace lidm
