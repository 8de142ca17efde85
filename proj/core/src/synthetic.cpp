#include "pbl/synthetic.hpp"

#include <array>
#include <random>

#include "pbl/error.hpp"

namespace pbl {

namespace {

const std::vector<std::string> kNouns = {"movie", "food",  "service", "weather", "concert", "book", "hotel", "trip",
                                         "game",  "meal",  "show",    "class",   "room",    "song", "day",   "party"};

const std::vector<std::string> kFrames = {
    "the {n} was {a} .",        "that {n} is {a} .",      "i thought the {n} was {a} .",
    "honestly the {n} felt {a} .", "what a {a} {n} .",     "my {n} today was {a} .",
    "the whole {n} seemed {a} .", "this {n} is so {a} !",
};

// A cued sentence puts the label right after the text; uncued ones give it in a trailing clause.
constexpr std::string_view kReviewCue = "review :";

const std::vector<std::string> kVerdicts = {"so it was {v} .", "overall {v} .", "my verdict : {v} ."};

const std::array<std::vector<std::string>, 3> kLexicon = {{
    {"terrible", "awful", "horrible", "dreadful", "miserable", "disgusting", "boring", "painful", "nasty", "poor"},
    {"ordinary", "average", "typical", "regular", "plain", "standard", "usual", "normal", "moderate", "common"},
    {"great", "wonderful", "excellent", "lovely", "delightful", "superb", "fantastic", "brilliant", "pleasant",
     "charming"},
}};

std::string fill(std::string s, std::string_view key, const std::string& value) {
  for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
    s.replace(pos, key.size(), value);
  }
  return s;
}

template <typename Rng>
const std::string& pick(const std::vector<std::string>& xs, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, xs.size() - 1);
  return xs[d(rng)];
}

template <typename Rng>
std::string sentiment_sentence(Sentiment s, Rng& rng) {
  const auto& frame = pick(kFrames, rng);
  const auto& noun = pick(kNouns, rng);
  const auto& adj = pick(kLexicon[static_cast<std::size_t>(s)], rng);
  return fill(fill(frame, "{n}", noun), "{a}", adj);
}

template <typename Rng>
std::string raw_label_for(DatasetFormat format, Sentiment s, Rng& rng) {
  static const std::array<std::vector<std::string>, 3> semeval = {
      {{"-3", "-2"}, {"-1", "0", "1"}, {"2", "3"}}};
  static const std::array<std::vector<std::string>, 3> sst5 = {
      {{"very-negative", "negative"}, {"neutral"}, {"positive", "very-positive"}}};
  const auto& table = format == DatasetFormat::semeval ? semeval : sst5;
  return pick(table[static_cast<std::size_t>(s)], rng);
}

}  // namespace

const std::vector<std::string>& sentiment_lexicon(Sentiment s) { return kLexicon[static_cast<std::size_t>(s)]; }

std::vector<TaskRow> generate_task_rows(const SyntheticTaskOptions& options) {
  if (options.train <= 0 || options.validation <= 0 || options.test < 0) {
    fail(ErrorKind::config, "synthetic task needs positive train and validation sizes");
  }
  std::mt19937_64 rng(options.seed);
  std::vector<TaskRow> rows;
  const std::array<std::pair<Split, int>, 3> splits = {
      {{Split::train, options.train}, {Split::validation, options.validation}, {Split::test, options.test}}};
  for (const auto& [split, count] : splits) {
    for (int i = 0; i < count; ++i) {
      const auto s = static_cast<Sentiment>(i % kNumClasses);
      rows.push_back({sentiment_sentence(s, rng), raw_label_for(options.format, s, rng), split});
    }
  }
  return rows;
}

std::vector<std::string> generate_pretraining_corpus(const SyntheticCorpusOptions& options) {
  if (options.sentences <= 0) fail(ErrorKind::config, "pretraining corpus size must be positive");
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<int> cls(0, kNumClasses - 1);
  std::uniform_int_distribution<int> kind(0, 9);
  std::bernoulli_distribution cued(0.5);
  const std::vector<std::string> mention_frames = {"i met a {w} person at the {n} .", "the {w} guest liked the {n} .",
                                                   "a {w} friend went to the {n} ."};
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(options.sentences));
  for (int i = 0; i < options.sentences; ++i) {
    if (!options.mention_words.empty() && kind(rng) == 0) {
      const auto& frame = pick(mention_frames, rng);
      out.push_back(fill(fill(frame, "{w}", pick(options.mention_words, rng)), "{n}", pick(kNouns, rng)));
      continue;
    }
    const auto s = static_cast<Sentiment>(cls(rng));
    if (cued(rng)) {
      out.push_back(std::string(kReviewCue) + " " + sentiment_sentence(s, rng) + " " + to_string(s));
    } else {
      out.push_back(sentiment_sentence(s, rng) + " " + fill(pick(kVerdicts, rng), "{v}", to_string(s)));
    }
  }
  return out;
}

}  // namespace pbl
