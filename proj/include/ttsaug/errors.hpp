// Error taxonomy shared across the library. The CLI maps each category to a
// distinct process exit code.
#pragma once

#include <stdexcept>
#include <string>

namespace ttsaug {

enum class Errc {
    config,        // spec/config validation failure
    synthesis,     // synthesis aborted (budget exhausted, engine gave up)
    credentials,   // missing or unusable API credentials
    corpus,        // malformed corpus data or unknown corpus
    manifest_gap,  // a required audio manifest entry is missing
    backend,       // encoder backend unavailable or shape mismatch
    report,        // report inputs incomplete (e.g. missing baseline)
    io,            // filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::config: return "config";
        case Errc::synthesis: return "synthesis";
        case Errc::credentials: return "credentials";
        case Errc::corpus: return "corpus";
        case Errc::manifest_gap: return "manifest-gap";
        case Errc::backend: return "backend";
        case Errc::report: return "report";
        case Errc::io: return "io";
    }
    return "unknown";
}

}  // namespace ttsaug
