#pragma once

// Greedy inflectional attack and the sentence scorers it queries.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "encaudit/corpus.hpp"
#include "encaudit/errors.hpp"

namespace encaudit {

// (lemma, POS) -> surface forms, and surface form -> analyses.
class InflectionLexicon {
  public:
    struct Analysis {
        std::string lemma;
        PosTag pos;
        std::string features;
    };

    void add(const std::string& lemma, PosTag pos, const std::string& form, const std::string& features) {
        forms_[{lemma, pos}].insert(form);
        analyses_[form].push_back({lemma, pos, features});
    }

    // JSON lines: {"lemma", "pos", "forms": {"form": "feature-string"}}.
    static InflectionLexicon load(const std::filesystem::path& path) {
        InflectionLexicon lex;
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open inflection lexicon " + path.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                const auto lemma = j.at("lemma").get<std::string>();
                const auto pos = parse_pos_tag(j.at("pos").get<std::string>());
                for (const auto& [form, feats] : j.at("forms").items())
                    lex.add(lemma, pos, form, feats.is_string() ? feats.get<std::string>() : feats.dump());
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        return lex;
    }

    bool empty() const { return forms_.empty(); }

    // All forms sharing a lemma with `surface` under the same POS, including
    // `surface` itself. Empty when the word is not covered.
    std::set<std::string> inflections(const std::string& surface, PosTag pos) const {
        std::set<std::string> out;
        auto it = analyses_.find(surface);
        if (it == analyses_.end()) return out;
        for (const auto& a : it->second) {
            if (a.pos != pos) continue;
            const auto& forms = forms_.at({a.lemma, a.pos});
            out.insert(forms.begin(), forms.end());
        }
        return out;
    }

  private:
    std::map<std::pair<std::string, PosTag>, std::set<std::string>> forms_;
    std::unordered_map<std::string, std::vector<Analysis>> analyses_;
};

class Scorer {
  public:
    virtual ~Scorer() = default;

    // One score per sentence (space-joined words), in order.
    virtual std::vector<double> score_batch(const std::vector<std::string>& sentences) = 0;

    double score(const std::string& sentence) { return score_batch({sentence}).front(); }
};

// Scores from a fixed table {"sentence text": score}; unknown sentences fail.
class LookupScorer : public Scorer {
  public:
    explicit LookupScorer(std::unordered_map<std::string, double> table) : table_(std::move(table)) {}

    static LookupScorer load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open scorer table " + path.string());
        try {
            return LookupScorer(nlohmann::json::parse(in).get<std::unordered_map<std::string, double>>());
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed scorer table " + path.string() + ": " + e.what());
        }
    }

    std::vector<double> score_batch(const std::vector<std::string>& sentences) override {
        std::vector<double> out;
        out.reserve(sentences.size());
        for (const auto& s : sentences) {
            auto it = table_.find(s);
            if (it == table_.end()) throw ScorerError("no score for \"" + s + "\"");
            out.push_back(it->second);
            ++calls_;
        }
        return out;
    }

    std::size_t calls() const { return calls_; }

  private:
    std::unordered_map<std::string, double> table_;
    std::size_t calls_ = 0;
};

// Talks to an external process over its standard streams, one JSON object
// per line: request {"id": k, "sentence": "..."}, response {"id": k,
// "score": x} or {"id": k, "error": "..."}. Responses may come back in any
// order. A request with no answer within `timeout` fails the batch.
class ProcessScorer : public Scorer {
  public:
    ProcessScorer(std::vector<std::string> argv, std::chrono::milliseconds timeout = std::chrono::seconds(60))
        : timeout_(timeout) {
        if (argv.empty()) throw ConfigError("scorer command is empty");
        ::signal(SIGPIPE, SIG_IGN);
        int to_child[2], from_child[2];
        if (::pipe(to_child) != 0) throw ScorerError(std::string("pipe: ") + std::strerror(errno));
        if (::pipe(from_child) != 0) {
            ::close(to_child[0]);
            ::close(to_child[1]);
            throw ScorerError(std::string("pipe: ") + std::strerror(errno));
        }
        pid_ = ::fork();
        if (pid_ < 0) throw ScorerError(std::string("fork: ") + std::strerror(errno));
        if (pid_ == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            std::vector<char*> args;
            for (auto& a : argv) args.push_back(a.data());
            args.push_back(nullptr);
            ::execvp(args[0], args.data());
            ::_exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
        ::fcntl(write_fd_, F_SETFL, ::fcntl(write_fd_, F_GETFL) | O_NONBLOCK);
        ::fcntl(read_fd_, F_SETFL, ::fcntl(read_fd_, F_GETFL) | O_NONBLOCK);
    }

    ProcessScorer(const ProcessScorer&) = delete;
    ProcessScorer& operator=(const ProcessScorer&) = delete;

    ~ProcessScorer() override {
        if (write_fd_ >= 0) ::close(write_fd_);
        if (read_fd_ >= 0) ::close(read_fd_);
        if (pid_ > 0) {
            int status = 0;
            for (int i = 0; i < 50; ++i) {
                if (::waitpid(pid_, &status, WNOHANG) != 0) return;
                ::usleep(10000);
            }
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
        }
    }

    std::vector<double> score_batch(const std::vector<std::string>& sentences) override {
        if (broken_) throw ScorerError("scorer process is no longer usable");
        std::unordered_map<std::uint64_t, std::size_t> pending;
        std::string outbox;
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            const std::uint64_t id = next_id_++;
            pending.emplace(id, i);
            outbox += nlohmann::json{{"id", id}, {"sentence", sentences[i]}}.dump();
            outbox += '\n';
        }
        std::vector<double> scores(sentences.size());
        try {
            exchange(outbox, pending, scores);
        } catch (...) {
            broken_ = true;
            throw;
        }
        return scores;
    }

  private:
    using Clock = std::chrono::steady_clock;

    void exchange(std::string& outbox, std::unordered_map<std::uint64_t, std::size_t>& pending,
                  std::vector<double>& scores) {
        std::size_t sent = 0;
        auto deadline = Clock::now() + timeout_;
        while (!pending.empty()) {
            pollfd fds[2];
            nfds_t n = 0;
            fds[n++] = {read_fd_, POLLIN, 0};
            if (sent < outbox.size()) fds[n++] = {write_fd_, POLLOUT, 0};
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
            if (left.count() <= 0) throw ScorerError("timed out waiting for scorer responses");
            const int rc = ::poll(fds, n, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw ScorerError(std::string("poll: ") + std::strerror(errno));
            }
            if (rc == 0) throw ScorerError("timed out waiting for scorer responses");
            if (n == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
                const ssize_t w = ::write(write_fd_, outbox.data() + sent, outbox.size() - sent);
                if (w < 0 && errno != EAGAIN && errno != EINTR)
                    throw ScorerError(std::string("writing to scorer: ") + std::strerror(errno));
                if (w > 0) sent += static_cast<std::size_t>(w);
            }
            if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
                char buf[4096];
                const ssize_t r = ::read(read_fd_, buf, sizeof buf);
                if (r == 0) throw ScorerError("scorer process closed its output");
                if (r < 0) {
                    if (errno == EAGAIN || errno == EINTR) continue;
                    throw ScorerError(std::string("reading from scorer: ") + std::strerror(errno));
                }
                inbox_.append(buf, static_cast<std::size_t>(r));
                std::size_t nl;
                while ((nl = inbox_.find('\n')) != std::string::npos) {
                    const std::string line = inbox_.substr(0, nl);
                    inbox_.erase(0, nl + 1);
                    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                    handle_response(line, pending, scores);
                    deadline = Clock::now() + timeout_;
                }
            }
        }
    }

    static void handle_response(const std::string& line, std::unordered_map<std::uint64_t, std::size_t>& pending,
                                std::vector<double>& scores) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw ScorerError("malformed scorer response: " + line);
        }
        if (!j.contains("id") || !j["id"].is_number_unsigned())
            throw ScorerError("scorer response without id: " + line);
        auto it = pending.find(j["id"].get<std::uint64_t>());
        if (it == pending.end()) throw ScorerError("scorer answered unknown id: " + line);
        if (j.contains("error")) throw ScorerError("scorer error: " + j["error"].dump());
        if (!j.contains("score") || !j["score"].is_number()) throw ScorerError("scorer response without score: " + line);
        scores[it->second] = j["score"].get<double>();
        pending.erase(it);
    }

    std::chrono::milliseconds timeout_;
    pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    std::uint64_t next_id_ = 0;
    std::string inbox_;
    bool broken_ = false;
};

inline bool is_inflectable(PosTag tag) {
    return tag == PosTag::NOUN || tag == PosTag::VERB || tag == PosTag::ADJ;
}

// Left-to-right greedy pass over NOUN/VERB/ADJ positions. At each position
// every other same-POS inflection is scored with the earlier choices fixed;
// the lowest score wins, ties go to the lexicographically smallest form, and
// the current form is kept unless something scores strictly lower.
inline NoisePair morpheus_attack(const TaggedSentence& sentence, Scorer& scorer, const InflectionLexicon& lexicon) {
    sentence.validate();
    NoisePair pair{sentence.id, sentence.words, sentence.words, ErrorType::Morpheus, {}};
    std::vector<std::string>& current = pair.noisy;

    std::optional<double> best;
    for (std::size_t i = 0; i < current.size(); ++i) {
        if (!is_inflectable(sentence.tags[i])) continue;
        std::set<std::string> forms = lexicon.inflections(current[i], sentence.tags[i]);
        forms.erase(current[i]);
        if (forms.empty()) continue;
        if (!best) best = scorer.score(join_words(current));

        std::vector<std::string> candidates(forms.begin(), forms.end());
        std::vector<std::string> texts;
        texts.reserve(candidates.size());
        const std::string original = current[i];
        for (const auto& form : candidates) {
            current[i] = form;
            texts.push_back(join_words(current));
        }
        current[i] = original;

        const auto scores = scorer.score_batch(texts);
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (scores[c] < *best) {
                best = scores[c];
                current[i] = candidates[c];
            }
        }
    }
    for (std::uint32_t i = 0; i < current.size(); ++i)
        if (current[i] != sentence.words[i]) pair.error_indices.push_back(i);
    return pair;
}

}  // namespace encaudit
