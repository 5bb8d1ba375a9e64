// Text-to-speech engines behind one interface, with a persistent manifest,
// content-addressed caching, retry, budget, and bounded parallelism.
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttsaug/audio.hpp"
#include "ttsaug/corpus.hpp"
#include "ttsaug/errors.hpp"

namespace ttsaug {

// Transport-level failure (connection refused, timeout, 429/5xx): retried
// with backoff. Any other Error thrown by an engine is a rejection and is
// recorded in the manifest as failed.
struct TransportError : Error {
    explicit TransportError(std::string message)
        : Error(Errc::synthesis, std::move(message)) {}
};

struct EngineConfig {
    std::string engine_id = "remote_api";  // remote_api | local | mock
    std::string model_name;
    std::string voice;
    std::string output_format = "wav";
    int target_sample_rate = 16000;

    // remote_api: base URL of the service and the NAME of the environment
    // variable holding the bearer token. The key itself never appears in
    // config files.
    std::string endpoint;
    std::string api_key_env;

    // local: command template; {textfile} and {out} are replaced with paths.
    std::string command;
};

// Throws Errc::config on a violated invariant (empty voice/model, bad rate,
// missing engine-specific settings).
void validate_engine_config(const EngineConfig& config);

enum class SynthStatus { success, failed, budget_aborted };

std::string synth_status_name(SynthStatus status);
SynthStatus synth_status_from_name(const std::string& name);

struct AudioManifestEntry {
    std::string sample_id;
    std::string engine_id;
    std::string model_name;
    std::string voice;
    std::string text_hash;  // content_digest of the exact synthesized text
    std::string file_path;
    double duration = 0.0;  // seconds, > 0 for successful entries
    size_t char_count = 0;
    double cost_estimate = 0.0;
    SynthStatus status = SynthStatus::success;
    std::string error;  // failure detail, empty on success

    bool operator==(const AudioManifestEntry&) const = default;
};

// (engine_id, model_name, voice, text_hash) identifies one synthesis output.
std::string cache_key(const std::string& engine_id, const std::string& model_name,
                      const std::string& voice, const std::string& text_hash);

// Append-only JSON-lines store. Every append is flushed to disk before it
// returns, so a killed run never has in-memory state the file lacks; entries
// are appended only after their audio file is fully renamed into place, so
// the manifest never points at a partial file.
class AudioManifest {
  public:
    AudioManifest() = default;  // in-memory only (tests)
    explicit AudioManifest(std::filesystem::path file);  // loads when present

    void append(AudioManifestEntry entry);

    // Latest non-aborted entry for the cache key, or null. Failed entries
    // whose error marks a transport exhaustion are treated as absent so a
    // later run retries them.
    const AudioManifestEntry* find(const std::string& key) const;
    // Latest successful entry for this sample with matching text digest.
    const AudioManifestEntry* find_sample(const std::string& sample_id,
                                          const std::string& text_hash) const;

    const std::vector<AudioManifestEntry>& entries() const { return entries_; }
    const std::filesystem::path& file() const { return file_; }

  private:
    std::filesystem::path file_;
    std::vector<AudioManifestEntry> entries_;
    std::unordered_map<std::string, size_t> by_key_;
    void index(size_t i);
};

class TtsEngine {
  public:
    virtual ~TtsEngine() = default;
    // Returns mono audio; the caller normalizes the sample rate afterwards.
    virtual Waveform synthesize(const std::string& text) = 0;
};

// Deterministic offline engine: a sine tone whose frequency is derived from
// the text digest and whose duration grows with the character count. The
// TTSAUG_MOCK_DELAY_MS environment variable adds a per-call delay so kill
// and concurrency tests can catch a run mid-flight.
class MockEngine : public TtsEngine {
  public:
    explicit MockEngine(const EngineConfig& config);
    Waveform synthesize(const std::string& text) override;

    size_t calls() const { return calls_.load(); }
    size_t max_in_flight() const { return max_in_flight_.load(); }

  private:
    int sample_rate_;
    int delay_ms_;
    std::atomic<size_t> calls_{0};
    std::atomic<size_t> in_flight_{0};
    std::atomic<size_t> max_in_flight_{0};
};

// HTTPS client for a speech endpoint: POST {model, voice, input,
// response_format} to /v1/audio/speech with a bearer token. The token is
// read, at construction, from the environment variable named in the config;
// a missing or empty variable is an immediate credentials error.
class RemoteEngine : public TtsEngine {
  public:
    explicit RemoteEngine(const EngineConfig& config);
    Waveform synthesize(const std::string& text) override;

  private:
    EngineConfig config_;
    std::string api_key_;
};

// Wraps an external synthesis command. The template's {textfile} placeholder
// receives a file containing the text; {out} receives the output wav path.
class LocalEngine : public TtsEngine {
  public:
    explicit LocalEngine(const EngineConfig& config);
    Waveform synthesize(const std::string& text) override;

  private:
    EngineConfig config_;
};

std::unique_ptr<TtsEngine> make_engine(const EngineConfig& config);

// Sum of character counts times the per-character rate.
double estimate_cost(const std::vector<std::string>& texts, double rate_per_char);

struct RetryPolicy {
    int attempts = 3;
    int initial_backoff_ms = 1000;  // doubles per retry
};

// Cache-or-synthesize one text. Returns the manifest entry describing the
// outcome (success or failed); throws TransportError once retries are
// exhausted, leaving no manifest entry so a later run tries again.
AudioManifestEntry synthesize_one(const std::string& text, const std::string& sample_id,
                                  TtsEngine& engine, const EngineConfig& config,
                                  AudioManifest& manifest,
                                  const std::filesystem::path& audio_dir, double rate_per_char,
                                  const RetryPolicy& retry = {});

struct SynthesisReport {
    size_t cached = 0;       // served from the manifest, no engine contact
    size_t synthesized = 0;  // fresh successful engine calls
    size_t failed = 0;       // engine rejections (recorded)
    size_t aborted = 0;      // budget-abort records
    size_t chars_synthesized = 0;  // characters sent in fresh successful calls
    double cost_spent = 0.0;       // cost of fresh synthesis this run
};

// Synthesizes every sample's target text with at most `parallelism` in-flight
// engine calls. Each sample ends up with a manifest entry: success, failed,
// or budget_aborted. Once the budget cannot cover the next uncached text, no
// further engine calls are made and all remaining uncached samples receive
// budget_aborted entries.
SynthesisReport synthesize_corpus(const std::vector<Sample>& samples, SelectRule rule,
                                  TtsEngine& engine, const EngineConfig& config,
                                  AudioManifest& manifest, double rate_per_char, double budget,
                                  size_t parallelism, const RetryPolicy& retry = {});

}  // namespace ttsaug
