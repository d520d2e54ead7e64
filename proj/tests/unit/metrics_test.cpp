#include "lidm/metrics.hpp"
#include "toy.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace lidm;
using lidm::testing::synthetic_corpus;

namespace {

// Straightforward corpus BLEU written from the definition, for cross-checking.
double reference_bleu(const std::vector<Tokens>& cands, const std::vector<Tokens>& refs) {
  double clen = 0, rlen = 0;
  std::vector<double> num(4, 0), den(4, 0);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    clen += cands[i].size();
    rlen += refs[i].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::vector<Tokens> cg, rg;
      for (std::size_t k = 0; k + n <= cands[i].size(); ++k) cg.emplace_back(cands[i].begin() + k, cands[i].begin() + k + n);
      for (std::size_t k = 0; k + n <= refs[i].size(); ++k) rg.emplace_back(refs[i].begin() + k, refs[i].begin() + k + n);
      den[n - 1] += cg.size();
      // greedy one-to-one pairing of candidate n-grams with unused reference n-grams
      std::vector<bool> used(rg.size(), false);
      for (const auto& g : cg) {
        for (std::size_t j = 0; j < rg.size(); ++j) {
          if (!used[j] && rg[j] == g) {
            used[j] = true;
            num[n - 1] += 1;
            break;
          }
        }
      }
    }
  }
  if (clen == 0) return 0.0;
  double acc = 0;
  int orders = 0;
  for (int n = 0; n < 4; ++n) {
    if (den[n] == 0) continue;
    if (num[n] == 0) return 0.0;
    acc += std::log(num[n] / den[n]);
    ++orders;
  }
  const double bp = clen > rlen ? 1.0 : std::exp(1 - rlen / clen);
  return bp * std::exp(acc / orders);
}

Tokens random_sentence(Rng& rng, int max_len) {
  static const std::vector<std::string> words{"the", "cat", "sat", "on", "mat", "a", "dog"};
  std::uniform_int_distribution<int> len(0, max_len), w(0, static_cast<int>(words.size()) - 1);
  Tokens out;
  for (int i = len(rng); i > 0; --i) out.push_back(words[static_cast<std::size_t>(w(rng))]);
  return out;
}

SearchResult hit(std::initializer_list<std::size_t> idx) {
  SearchResult r;
  r.indices = idx;
  r.count = static_cast<int>(r.indices.size());
  return r;
}

std::size_t kb_index(const std::string& name) { return *synthetic_corpus().kb.find_by_name(name); }

}  // namespace

TEST(Bleu, IdenticalCorpusScoresOne) {
  const std::vector<Tokens> c{tokenize("the phone number is [v.phone] ."), tokenize("goodbye and thanks")};
  EXPECT_DOUBLE_EQ(corpus_bleu(c, c), 1.0);
}

TEST(Bleu, ShortCandidateRenormalisesOverOrders) {
  // unigram 2/2, bigram 1/1, no tri- or 4-grams in the candidate; only the brevity penalty remains
  EXPECT_NEAR(corpus_bleu({tokenize("the cat")}, {tokenize("the cat sat")}), std::exp(1.0 - 3.0 / 2.0), 1e-12);
}

TEST(Bleu, NoOverlapIsZero) {
  EXPECT_EQ(corpus_bleu({tokenize("a b c d")}, {tokenize("w x y z")}), 0.0);
  EXPECT_EQ(corpus_bleu({Tokens{}}, {tokenize("w x")}), 0.0);
}

TEST(Bleu, ClipsRepeatedWords) {
  // unigrams clip to 2/7 and the reference has no "the the" bigram
  EXPECT_EQ(corpus_bleu({tokenize("the the the the the the the")}, {tokenize("the cat is on the mat")}), 0.0);
  EXPECT_NEAR(corpus_bleu({tokenize("the the")}, {tokenize("the the cat")}),
              std::exp(1.0 - 3.0 / 2.0), 1e-12);
}

TEST(Bleu, EmptyCorpusThrows) {
  EXPECT_THROW(corpus_bleu({}, {}), std::invalid_argument);
  EXPECT_THROW(corpus_bleu({Tokens{"a"}}, {}), std::invalid_argument);
}

TEST(Bleu, MatchesReferenceImplementation) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Tokens> c, r;
    const int n = 1 + trial % 5;
    for (int i = 0; i < n; ++i) {
      c.push_back(random_sentence(rng, 8));
      r.push_back(random_sentence(rng, 8));
    }
    EXPECT_NEAR(corpus_bleu(c, r), reference_bleu(c, r), 1e-12) << trial;
  }
}

TEST(Bleu, InvariantToSentenceOrder) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tokens> c, r;
    for (int i = 0; i < 6; ++i) {
      c.push_back(random_sentence(rng, 6));
      r.push_back(random_sentence(rng, 6));
    }
    const double before = corpus_bleu(c, r);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Tokens> pc, pr;
    for (auto i : perm) {
      pc.push_back(c[i]);
      pr.push_back(r[i]);
    }
    EXPECT_NEAR(corpus_bleu(pc, pr), before, 1e-12);
    EXPECT_GE(before, 0.0);
    EXPECT_LE(before, 1.0);
  }
}

TEST(SentenceBleu, AddOneSmoothing) {
  // p1 = 2/3, p2 = (1+1)/(2+1), p3 = (0+1)/(1+1), p4 = (0+1)/(0+1), no brevity penalty
  EXPECT_NEAR(sentence_bleu(tokenize("a b c"), tokenize("a b d")), std::pow(2.0 / 9.0, 0.25), 1e-12);
  EXPECT_DOUBLE_EQ(sentence_bleu(tokenize("a b c d e"), tokenize("a b c d e")), 1.0);
  EXPECT_EQ(sentence_bleu(Tokens{}, tokenize("a b")), 0.0);
  EXPECT_EQ(sentence_bleu(tokenize("x y"), tokenize("a b")), 0.0);
}

TEST(SentenceBleu, BoundedAndPositiveWithSharedWord) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens c = random_sentence(rng, 7), r = random_sentence(rng, 7);
    c.push_back("mat");
    r.push_back("mat");
    const double s = sentence_bleu(c, r);
    EXPECT_GT(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Success, OfferThenAnswer) {
  const auto& kb = synthetic_corpus().kb;
  const auto cp = kb_index("curry prince");
  const auto o = dialogue_success({{"food", "indian"}, {"area", "east"}}, {"phone"},
                                  {tokenize("[v.name] is nice"), tokenize("the phone is [v.phone] .")},
                                  {hit({cp}), hit({cp})}, kb);
  EXPECT_TRUE(o.success);
  EXPECT_EQ(o.entity, cp);
  EXPECT_EQ(o.answered, (std::set<std::string>{"phone"}));
  ASSERT_EQ(o.offered.size(), 2u);
  EXPECT_EQ(o.offered[0], cp);
}

TEST(Success, MissingRequestFails) {
  const auto& kb = synthetic_corpus().kb;
  const auto cp = kb_index("curry prince");
  const auto o = dialogue_success({{"food", "indian"}}, {"phone", "postcode"},
                                  {tokenize("[v.name] is nice"), tokenize("the phone is [v.phone] .")},
                                  {hit({cp}), hit({cp})}, kb);
  EXPECT_FALSE(o.success);
  EXPECT_EQ(o.entity, cp);
  EXPECT_EQ(o.answered, (std::set<std::string>{"phone"}));
}

TEST(Success, WrongEntityFails) {
  const auto& kb = synthetic_corpus().kb;
  const auto gh = kb_index("golden house");
  const auto o = dialogue_success({{"food", "indian"}}, {}, {tokenize("[v.name] is nice")}, {hit({gh})}, kb);
  EXPECT_FALSE(o.success);
  EXPECT_FALSE(o.entity.has_value());
}

TEST(Success, InformationWithoutOfferFails) {
  const auto& kb = synthetic_corpus().kb;
  const auto cp = kb_index("curry prince");
  const auto o = dialogue_success({{"food", "indian"}}, {"phone"}, {tokenize("the phone is [v.phone]")}, {hit({cp})}, kb);
  EXPECT_FALSE(o.success);
  EXPECT_FALSE(o.offered[0].has_value());
}

TEST(Success, NameWithoutMatchesOffersNothing) {
  const auto& kb = synthetic_corpus().kb;
  const auto o = dialogue_success({}, {}, {tokenize("[v.name] is nice")}, {hit({})}, kb);
  EXPECT_FALSE(o.success);
  EXPECT_FALSE(o.offered[0].has_value());
}

TEST(Success, DontcareAlwaysHolds) {
  const auto& kb = synthetic_corpus().kb;
  const auto gh = kb_index("golden house");
  const auto o = dialogue_success({{"food", "chinese"}, {"area", "dontcare"}}, {},
                                  {tokenize("[v.name] serves [v.food]")}, {hit({gh})}, kb);
  EXPECT_TRUE(o.success);
}

TEST(Success, LaterOfferReplacesCurrent) {
  const auto& kb = synthetic_corpus().kb;
  const auto gh = kb_index("golden house");
  const auto cp = kb_index("curry prince");
  const std::vector<Tokens> responses{tokenize("[v.name] ?"), tokenize("how about [v.name]"),
                                      tokenize("phone [v.phone]")};
  const auto o = dialogue_success({{"food", "indian"}}, {"phone"}, responses, {hit({gh}), hit({cp, gh}), hit({gh})}, kb);
  EXPECT_TRUE(o.success);
  EXPECT_EQ(o.entity, cp);
  EXPECT_EQ(o.offered, (std::vector<std::optional<std::size_t>>{gh, cp, cp}));
  // information given before the correct offer does not count
  const auto early = dialogue_success({{"food", "indian"}}, {"phone"},
                                      {tokenize("[v.name] [v.phone]"), tokenize("how about [v.name]")},
                                      {hit({gh}), hit({cp})}, kb);
  EXPECT_FALSE(early.success);
}

TEST(Success, RequiresOneResultPerResponse) {
  EXPECT_THROW(dialogue_success({}, {}, {Tokens{}}, {}, synthetic_corpus().kb), std::invalid_argument);
}

// Appending turns to a successful dialogue never undoes the success.
TEST(Success, MonotoneInDialogueLength) {
  const auto& kb = synthetic_corpus().kb;
  Rng rng(4);
  const std::vector<std::string> pieces{"[v.name]", "[v.phone]", "[v.address]", "[v.postcode]", "[v.food]", "ok"};
  std::uniform_int_distribution<std::size_t> piece(0, pieces.size() - 1), ent(0, kb.size() - 1);
  int successes = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Tokens> responses;
    std::vector<SearchResult> results;
    for (int t = 0; t < 6; ++t) {
      responses.push_back({pieces[piece(rng)], pieces[piece(rng)]});
      results.push_back(hit({ent(rng) % 4}));
    }
    const std::map<std::string, std::string> goal{{"food", kb.at(0).food}};
    const std::set<std::string> req{"phone"};
    bool before = false;
    for (std::size_t n = 1; n <= responses.size(); ++n) {
      const bool now = dialogue_success(goal, req, {responses.begin(), responses.begin() + n},
                                        {results.begin(), results.begin() + n}, kb)
                           .success;
      EXPECT_TRUE(!before || now);
      before = now;
    }
    successes += before;
  }
  EXPECT_GT(successes, 0);
}

TEST(Satisfies, ChecksEveryConstraint) {
  const auto& e = synthetic_corpus().kb.at(kb_index("curry prince"));
  EXPECT_TRUE(satisfies(e, {}));
  EXPECT_TRUE(satisfies(e, {{"food", "indian"}, {"pricerange", "moderate"}}));
  EXPECT_FALSE(satisfies(e, {{"food", "indian"}, {"pricerange", "cheap"}}));
}
