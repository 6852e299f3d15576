#include <gtest/gtest.h>

#include <fstream>

#include "encaudit/morpheus.hpp"
#include "support.hpp"

using namespace encaudit;
using namespace testing_support;

namespace {

class ConstantScorer : public Scorer {
  public:
    std::vector<double> score_batch(const std::vector<std::string>& s) override {
        return std::vector<double>(s.size(), 0.5);
    }
};

InflectionLexicon small_lexicon() {
    InflectionLexicon lex;
    lex.add("dog", PosTag::NOUN, "dog", "Number=Sing");
    lex.add("dog", PosTag::NOUN, "dogs", "Number=Plur");
    lex.add("bark", PosTag::VERB, "bark", "");
    lex.add("bark", PosTag::VERB, "barks", "");
    return lex;
}

const TaggedSentence kSentence{"t", {"the", "dog", "barks", "."}, {PosTag::DET, PosTag::NOUN, PosTag::VERB, PosTag::PUNCT}, {}};

std::string python() { return "python3"; }

}  // namespace

TEST(Lexicon, InflectionsIncludeSurfaceAndRespectPos) {
    const auto lex = small_lexicon();
    EXPECT_EQ(lex.inflections("dogs", PosTag::NOUN), (std::set<std::string>{"dog", "dogs"}));
    EXPECT_TRUE(lex.inflections("dogs", PosTag::VERB).empty());
    EXPECT_TRUE(lex.inflections("cat", PosTag::NOUN).empty());
}

TEST(Lexicon, LoadsFixtureAndEveryFormMapsBack) {
    const auto lex = InflectionLexicon::load(fixture("lexicon.jsonl"));
    EXPECT_FALSE(lex.empty());
    for (const auto& form : lex.inflections("churches", PosTag::NOUN))
        EXPECT_TRUE(lex.inflections(form, PosTag::NOUN).count("churches")) << form;
}

TEST(Morpheus, EmptyLexiconLeavesSentenceUnchanged) {
    ConstantScorer scorer;
    const auto pair = morpheus_attack(kSentence, scorer, InflectionLexicon{});
    EXPECT_EQ(pair.noisy, pair.clean);
    EXPECT_TRUE(pair.error_indices.empty());
    EXPECT_EQ(pair.type, ErrorType::Morpheus);
}

TEST(Morpheus, ConstantScorerKeepsOriginals) {
    ConstantScorer scorer;
    const auto pair = morpheus_attack(kSentence, scorer, small_lexicon());
    EXPECT_EQ(pair.noisy, kSentence.words);
}

TEST(Morpheus, FourWordLookupMatchesExhaustiveGreedy) {
    // every assignment of the two inflectable slots gets a score
    const std::vector<std::map<std::string, double>> tables = {
        {{"the dog barks .", 0.9}, {"the dogs barks .", 0.4}, {"the dog bark .", 0.5}, {"the dogs bark .", 0.2}},
        {{"the dog barks .", 0.3}, {"the dogs barks .", 0.4}, {"the dog bark .", 0.1}, {"the dogs bark .", 0.05}},
        {{"the dog barks .", 0.5}, {"the dogs barks .", 0.5}, {"the dog bark .", 0.5}, {"the dogs bark .", 0.1}},
        {{"the dog barks .", 0.7}, {"the dogs barks .", 0.6}, {"the dog bark .", 0.1}, {"the dogs bark .", 0.6}}};
    for (const auto& t : tables) {
        LookupScorer scorer({t.begin(), t.end()});
        LookupScorer oracle_scorer({t.begin(), t.end()});
        const auto lex = small_lexicon();
        const auto pair = morpheus_attack(kSentence, scorer, lex);
        EXPECT_EQ(pair.noisy, brute_force_greedy(kSentence, oracle_scorer, lex));
        EXPECT_LE(t.at(join_words(pair.noisy)), t.at(join_words(pair.clean)));
    }
}

TEST(Morpheus, TieBetweenCandidatesGoesToLexicographicallySmallest) {
    InflectionLexicon lex;
    for (const auto* f : {"sing", "sang", "sung", "sings"}) lex.add("sing", PosTag::VERB, f, "");
    const TaggedSentence s{"t", {"we", "sing"}, {PosTag::PRON, PosTag::VERB}, {}};
    LookupScorer scorer({{"we sing", 0.8}, {"we sang", 0.2}, {"we sung", 0.2}, {"we sings", 0.5}});
    EXPECT_EQ(morpheus_attack(s, scorer, lex).noisy[1], "sang");
}

TEST(Morpheus, FixtureSentencesMatchBruteForceGreedy) {
    const auto lex = InflectionLexicon::load(fixture("lexicon.jsonl"));
    auto scorer = LookupScorer::load(fixture("scores.json"));
    auto oracle_scorer = LookupScorer::load(fixture("scores.json"));
    const auto corpus = read_corpus(fixture("attack_corpus.jsonl"));
    ASSERT_FALSE(corpus.empty());
    for (const auto& s : corpus) {
        const auto pair = morpheus_attack(s, scorer, lex);
        EXPECT_EQ(pair.noisy, brute_force_greedy(s, oracle_scorer, lex)) << s.id;
        EXPECT_LE(oracle_scorer.score(join_words(pair.noisy)), oracle_scorer.score(join_words(pair.clean)));
        for (std::uint32_t i = 0; i < s.words.size(); ++i)
            EXPECT_EQ(pair.noisy[i] != s.words[i], std::count(pair.error_indices.begin(), pair.error_indices.end(), i) == 1);
    }
}

TEST(Morpheus, MissingScoreIsScorerError) {
    LookupScorer scorer({{"the dog barks .", 0.5}});
    EXPECT_THROW(morpheus_attack(kSentence, scorer, small_lexicon()), ScorerError);
}

TEST(ProcessScorerTest, AnswersMatchLookupTable) {
    ProcessScorer proc({python(), fixture("scorer.py").string(), fixture("scores.json").string()});
    auto lookup = LookupScorer::load(fixture("scores.json"));
    const std::vector<std::string> sentences = {"A mouse found at the quiet houses .", "A mouse finds at the quiet house ."};
    EXPECT_EQ(proc.score_batch(sentences), lookup.score_batch(sentences));
    EXPECT_EQ(proc.score(sentences[1]), lookup.score(sentences[1]));
}

TEST(ProcessScorerTest, OutOfOrderResponsesAreMatchedById) {
    ProcessScorer proc({python(), fixture("scorer.py").string(), fixture("scores.json").string(), "--reverse", "3"});
    auto lookup = LookupScorer::load(fixture("scores.json"));
    const std::vector<std::string> sentences = {"A mouse found at the quiet houses .", "A mouse finds at the quiet house .",
                                                "A mouse find at the quiet houses ."};
    EXPECT_EQ(proc.score_batch(sentences), lookup.score_batch(sentences));
}

TEST(ProcessScorerTest, ErrorResponseIsScorerError) {
    ProcessScorer proc({python(), fixture("scorer.py").string(), fixture("scores.json").string()});
    EXPECT_THROW(proc.score("not in the table"), ScorerError);
}

TEST(ProcessScorerTest, TimeoutIsScorerError) {
    ProcessScorer proc({"sh", "-c", "sleep 5"}, std::chrono::milliseconds(200));
    const auto start = std::chrono::steady_clock::now();
    EXPECT_THROW(proc.score("anything"), ScorerError);
    EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(3));
}

TEST(ProcessScorerTest, ExitedProcessIsScorerError) {
    ProcessScorer proc({"sh", "-c", "exit 0"});
    EXPECT_THROW(proc.score("anything"), ScorerError);
    ProcessScorer missing({"/nonexistent/scorer"});
    EXPECT_THROW(missing.score("anything"), ScorerError);
}

TEST(ProcessScorerTest, AttackThroughProcessMatchesLookup) {
    const auto lex = InflectionLexicon::load(fixture("lexicon.jsonl"));
    const auto corpus = read_corpus(fixture("attack_corpus.jsonl"));
    ProcessScorer proc({python(), fixture("scorer.py").string(), fixture("scores.json").string()});
    auto lookup = LookupScorer::load(fixture("scores.json"));
    for (std::size_t i = 0; i < 3 && i < corpus.size(); ++i)
        EXPECT_EQ(morpheus_attack(corpus[i], proc, lex), morpheus_attack(corpus[i], lookup, lex));
}
