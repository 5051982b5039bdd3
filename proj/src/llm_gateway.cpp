#include "certgate/llm_gateway.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "certgate/hash.hpp"
#include "certgate/text.hpp"

namespace certgate {

using nlohmann::json;

std::string_view to_string(Backend b) {
    switch (b) {
        case Backend::remote_chat: return "remote_chat";
        case Backend::scripted_mock: return "scripted_mock";
        case Backend::replay_cache_only: return "replay_cache_only";
    }
    return "unknown";
}

Backend parse_backend(std::string_view name) {
    if (name == "remote_chat" || name == "remote") return Backend::remote_chat;
    if (name == "scripted_mock" || name == "mock") return Backend::scripted_mock;
    if (name == "replay_cache_only" || name == "replay") return Backend::replay_cache_only;
    throw std::invalid_argument(fmt::format("unknown backend '{}'", name));
}

bool glob_match(std::string_view pattern, std::string_view text) {
    // Iterative matcher with single-star backtracking.
    std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

ScriptedMock::ScriptedMock(std::vector<Rule> rules, Handler handler)
    : rules_(std::move(rules)), handler_(std::move(handler)) {
    for (const auto& r : rules_) {
        if (r.match == Match::regex) std::regex check(r.pattern);  // throws std::regex_error early
    }
}

ScriptedMock ScriptedMock::from_json(std::string_view json_text) {
    const auto doc = json::parse(json_text);
    std::vector<Rule> rules;
    for (const auto& r : doc.at("rules")) {
        Rule rule;
        const auto kind = r.value("match", std::string("glob"));
        if (kind == "exact") {
            rule.match = Match::exact;
        } else if (kind == "glob") {
            rule.match = Match::glob;
        } else if (kind == "contains") {
            rule.match = Match::contains;
        } else if (kind == "regex") {
            rule.match = Match::regex;
        } else {
            throw std::invalid_argument(fmt::format("unknown script match kind '{}'", kind));
        }
        rule.pattern = r.at("pattern").get<std::string>();
        rule.completion = r.at("completion").get<std::string>();
        if (r.contains("turn")) rule.turn = r["turn"].get<int>();
        rules.push_back(std::move(rule));
    }
    return ScriptedMock(std::move(rules));
}

ScriptedMock ScriptedMock::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open mock script '{}'", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string ScriptedMock::respond(std::string_view prompt, int turn) const {
    for (const auto& r : rules_) {
        if (r.turn && *r.turn != turn) continue;
        bool hit = false;
        switch (r.match) {
            case Match::exact: hit = prompt == r.pattern; break;
            case Match::glob: hit = glob_match(r.pattern, prompt); break;
            case Match::contains: hit = prompt.find(r.pattern) != std::string_view::npos; break;
            case Match::regex: hit = std::regex_search(prompt.begin(), prompt.end(), std::regex(r.pattern)); break;
        }
        if (hit) return r.completion;
    }
    if (handler_) {
        if (auto out = handler_(prompt, turn)) return *out;
    }
    const auto preview = prompt.substr(0, 80);
    throw ScriptGap(fmt::format("mock script has no rule for prompt (turn {}): '{}'", turn, preview));
}

void ModelSpec::validate() const {
    decode.validate();
    if (model_name.empty()) throw std::invalid_argument("model_name must not be empty");
    if (backend == Backend::remote_chat && (!endpoint || endpoint->empty())) {
        throw std::invalid_argument("remote_chat backend requires an endpoint");
    }
    if (backend == Backend::scripted_mock && !script) {
        throw std::invalid_argument("scripted_mock backend requires a script");
    }
    if (retry.max_retries < 0 || retry.base_delay_ms < 0) throw std::invalid_argument("retry policy must be >= 0");
}

CacheKey CacheKey::of(std::string_view model_name, std::string_view prompt, const DecodeParams& decode, int turn) {
    const json canonical = {
        {"model", std::string(model_name)},
        {"prompt", std::string(prompt)},
        {"decode", {{"max_output_tokens", decode.max_output_tokens}, {"temperature", decode.temperature},
                    {"extra", decode.extra}}},
        {"turn", turn},
    };
    return CacheKey{sha256_hex(canonical.dump())};
}

ResponseCache::ResponseCache(std::string directory) {
    std::filesystem::create_directories(directory);
    path_ = (std::filesystem::path(directory) / "completions.jsonl").string();
    std::ifstream in(*path_);
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
            const auto rec = json::parse(line);
            entries_.insert_or_assign(rec.at("digest").get<std::string>(), rec.at("completion").get<std::string>());
        } catch (const json::exception&) {
            ++skipped_lines_;
        }
    }
    if (skipped_lines_ > 0) {
        spdlog::warn("response cache {}: skipped {} unreadable line(s)", *path_, skipped_lines_);
    }
}

std::optional<std::string> ResponseCache::lookup(const CacheKey& key) const {
    std::lock_guard lock(mu_);
    const auto it = entries_.find(key.digest);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::store(const CacheKey& key, std::string_view model_name, std::string_view prompt,
                          std::string_view completion) {
    std::lock_guard lock(mu_);
    if (entries_.contains(key.digest)) return;
    if (path_) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&now, &tm);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
        const json rec = {{"digest", key.digest},
                          {"model_name", std::string(model_name)},
                          {"prompt", std::string(prompt)},
                          {"completion", std::string(completion)},
                          {"timestamp", stamp}};
        std::ofstream out(*path_, std::ios::app | std::ios::binary);
        if (!out) throw std::runtime_error(fmt::format("cannot append to response cache '{}'", *path_));
        out << rec.dump() << '\n';
        out.flush();
    }
    entries_.emplace(key.digest, std::string(completion));
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

LlmGateway::LlmGateway(ModelSpec spec, std::shared_ptr<ResponseCache> cache)
    : spec_(std::move(spec)), cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()) {
    spec_.validate();
}

GatewayCounters LlmGateway::counters() const {
    return {calls_.load(), cache_hits_.load(), network_requests_.load()};
}

Completion LlmGateway::complete(std::string_view prompt, int turn) {
    if (prompt.empty()) throw std::invalid_argument("complete: empty prompt");
    ++calls_;
    const auto key = CacheKey::of(spec_.model_name, prompt, spec_.decode, turn);
    if (auto hit = cache_->lookup(key)) {
        ++cache_hits_;
        return {std::move(*hit), true};
    }
    std::string text;
    switch (spec_.backend) {
        case Backend::replay_cache_only:
            throw CacheMiss(fmt::format("no cached completion for key {}", key.digest));
        case Backend::scripted_mock:
            text = spec_.script->respond(prompt, turn);
            break;
        case Backend::remote_chat:
            text = call_remote(prompt);
            break;
    }
    cache_->store(key, spec_.model_name, prompt, text);
    return {std::move(text), false};
}

namespace {

struct Url {
    std::string base;
    std::string path;
};

Url split_url(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw std::invalid_argument(fmt::format("malformed endpoint '{}'", url));
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

bool retryable_status(int status) { return status >= 500 || status == 408 || status == 429; }

}  // namespace

std::string LlmGateway::call_remote(std::string_view prompt) {
    const auto url = split_url(*spec_.endpoint);
    httplib::Headers headers;
    if (spec_.credentials_ref) {
        const char* token = std::getenv(spec_.credentials_ref->c_str());
        if (token == nullptr || *token == '\0') {
            throw BackendUnavailable(fmt::format("credential variable {} is not set", *spec_.credentials_ref));
        }
        headers.emplace("Authorization", fmt::format("Bearer {}", token));
    }

    json body = {{spec_.wire.model_field, spec_.model_name},
                 {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
                 {spec_.wire.max_tokens_field, spec_.decode.max_output_tokens},
                 {spec_.wire.temperature_field, spec_.decode.temperature}};
    for (const auto& [k, v] : spec_.decode.extra) {
        // Values that parse as JSON (numbers, booleans) are sent typed.
        const auto parsed = json::parse(v, nullptr, false);
        body[k] = parsed.is_discarded() ? json(v) : parsed;
    }
    const auto payload = body.dump();

    httplib::Client cli(url.base);
    const auto secs = static_cast<time_t>(spec_.retry.timeout_seconds);
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);

    std::string last_error;
    for (int attempt = 0; attempt <= spec_.retry.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(spec_.retry.base_delay_ms << (attempt - 1)));
        }
        ++network_requests_;
        auto res = cli.Post(url.path, headers, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            spdlog::warn("{}: request failed ({}), attempt {}/{}", spec_.model_name, last_error, attempt + 1,
                         spec_.retry.max_retries + 1);
            continue;
        }
        if (res->status == 200) {
            json parsed;
            try {
                parsed = json::parse(res->body);
                return parsed.at(json::json_pointer(spec_.wire.response_pointer)).get<std::string>();
            } catch (const json::exception& e) {
                throw BackendUnavailable(fmt::format("unexpected response shape: {}", e.what()), res->status);
            }
        }
        last_error = fmt::format("HTTP {}", res->status);
        if (!retryable_status(res->status)) {
            throw BackendUnavailable(fmt::format("{} rejected the request: {}", url.base, last_error), res->status);
        }
        spdlog::warn("{}: {} on attempt {}/{}", spec_.model_name, last_error, attempt + 1, spec_.retry.max_retries + 1);
    }
    throw BackendUnavailable(
        fmt::format("{} unavailable after {} attempts: {}", url.base, spec_.retry.max_retries + 1, last_error));
}

}  // namespace certgate
