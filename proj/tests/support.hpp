#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "certgate/llm_gateway.hpp"

namespace certgate::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("certgate-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::string& path, const std::string& content) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << content;
}

inline std::unique_ptr<LlmGateway> mock_gateway(ScriptedMock::Handler handler, std::string model = "mock") {
    ModelSpec spec;
    spec.backend = Backend::scripted_mock;
    spec.model_name = std::move(model);
    spec.script = std::make_shared<ScriptedMock>(std::vector<ScriptedMock::Rule>{}, std::move(handler));
    return std::make_unique<LlmGateway>(std::move(spec));
}

// Text after the last "Question: " marker of a rendered prompt, up to the
// end of that line.
inline std::string question_of(std::string_view prompt) {
    const auto pos = prompt.rfind("Question: ");
    if (pos == std::string_view::npos) return {};
    auto rest = prompt.substr(pos + 10);
    return std::string(rest.substr(0, rest.find('\n')));
}

}  // namespace certgate::testing
