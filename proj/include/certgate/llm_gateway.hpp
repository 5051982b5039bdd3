#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "certgate/core.hpp"

namespace certgate {

class BackendUnavailable : public std::runtime_error {
public:
    BackendUnavailable(const std::string& what, int http_status = 0)
        : std::runtime_error(what), http_status_(http_status) {}
    /// 0 for transport failures.
    int http_status() const { return http_status_; }

private:
    int http_status_;
};

class CacheMiss : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ScriptGap : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Backend { remote_chat, scripted_mock, replay_cache_only };

std::string_view to_string(Backend b);
Backend parse_backend(std::string_view name);

/// Deterministic stand-in for a model: the first matching rule answers.
class ScriptedMock {
public:
    enum class Match { exact, glob, contains, regex };

    struct Rule {
        Match match = Match::glob;
        std::string pattern;
        std::string completion;
        /// Restricts the rule to one turn index when set.
        std::optional<int> turn;
    };

    /// Programmatic responder consulted after the rules; nullopt means no
    /// answer.
    using Handler = std::function<std::optional<std::string>(std::string_view prompt, int turn)>;

    ScriptedMock() = default;
    explicit ScriptedMock(std::vector<Rule> rules, Handler handler = {});

    /// JSON: {"rules": [{"match": "glob", "pattern": "...", "completion": "...", "turn": 0}]}
    static ScriptedMock load(const std::string& path);
    static ScriptedMock from_json(std::string_view json_text);

    /// Throws ScriptGap when nothing matches.
    std::string respond(std::string_view prompt, int turn) const;

    const std::vector<Rule>& rules() const { return rules_; }

private:
    std::vector<Rule> rules_;
    Handler handler_;
};

/// `*` matches any run of characters, `?` any single character.
bool glob_match(std::string_view pattern, std::string_view text);

/// Field mapping for chat-completion style HTTP APIs.
struct WireFormat {
    std::string model_field = "model";
    std::string max_tokens_field = "max_tokens";
    std::string temperature_field = "temperature";
    /// JSON pointer to the completion text in the response body.
    std::string response_pointer = "/choices/0/message/content";
};

struct RetryPolicy {
    int max_retries = 3;
    int base_delay_ms = 500;
    double timeout_seconds = 60.0;
};

struct ModelSpec {
    Backend backend = Backend::scripted_mock;
    std::string model_name = "mock";
    std::optional<std::string> endpoint;
    /// Name of the environment variable holding the bearer token.
    std::optional<std::string> credentials_ref;
    DecodeParams decode;
    std::shared_ptr<const ScriptedMock> script;
    WireFormat wire;
    RetryPolicy retry;

    /// Throws std::invalid_argument on a backend without its requirements.
    void validate() const;
};

struct CacheKey {
    std::string digest;

    static CacheKey of(std::string_view model_name, std::string_view prompt, const DecodeParams& decode, int turn);
    friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

/// Append-only store of completions keyed by CacheKey. With a directory the
/// records go to `<dir>/completions.jsonl`, one JSON object per line, and the
/// index is rebuilt from that file on construction. Without a directory the
/// cache lives in memory only.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(std::string directory);

    std::optional<std::string> lookup(const CacheKey& key) const;
    void store(const CacheKey& key, std::string_view model_name, std::string_view prompt, std::string_view completion);

    std::size_t size() const;
    /// Lines skipped while loading (e.g. a record truncated by a crash).
    std::size_t skipped_lines() const { return skipped_lines_; }

private:
    std::optional<std::string> path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::string> entries_;
    std::size_t skipped_lines_ = 0;
};

struct Completion {
    std::string text;
    bool from_cache = false;
};

struct GatewayCounters {
    std::int64_t calls = 0;
    std::int64_t cache_hits = 0;
    std::int64_t network_requests = 0;
};

/// complete() for one model: cache first, then the backend; fresh responses
/// are persisted before they are returned. Safe for concurrent use.
class LlmGateway {
public:
    LlmGateway(ModelSpec spec, std::shared_ptr<ResponseCache> cache = std::make_shared<ResponseCache>());

    /// `turn` separates the rounds of multi-turn protocols in the cache.
    /// Throws BackendUnavailable, CacheMiss or ScriptGap.
    Completion complete(std::string_view prompt, int turn = 0);

    const ModelSpec& spec() const { return spec_; }
    GatewayCounters counters() const;

private:
    std::string call_remote(std::string_view prompt);

    ModelSpec spec_;
    std::shared_ptr<ResponseCache> cache_;
    std::atomic<std::int64_t> calls_{0};
    std::atomic<std::int64_t> cache_hits_{0};
    std::atomic<std::int64_t> network_requests_{0};
};

}  // namespace certgate
