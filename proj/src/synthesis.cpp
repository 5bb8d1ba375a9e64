#include "ttsaug/synthesis.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ttsaug/kernels.hpp"
#include "ttsaug/util.hpp"

namespace ttsaug {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Failed entries with this prefix mark exhausted transport retries; the cache
// treats them as absent so a later run attempts them again.
constexpr const char* kTransportPrefix = "transport: ";

fs::path unique_temp_path(const std::string& suffix) {
    static std::atomic<uint64_t> counter{0};
    return fs::temp_directory_path() /
           ("ttsaug_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)) + suffix);
}

Waveform at_target_rate(Waveform wave, int target_rate) {
    if (wave.sample_rate == target_rate) return wave;
    Waveform out;
    out.sample_rate = target_rate;
    out.samples = kernels::resample(wave.samples, wave.sample_rate, target_rate);
    return out;
}

json entry_to_json(const AudioManifestEntry& e) {
    return json{{"sample_id", e.sample_id},
                {"engine_id", e.engine_id},
                {"model_name", e.model_name},
                {"voice", e.voice},
                {"text_hash", e.text_hash},
                {"file_path", e.file_path},
                {"duration", e.duration},
                {"char_count", e.char_count},
                {"cost_estimate", e.cost_estimate},
                {"status", synth_status_name(e.status)},
                {"error", e.error}};
}

AudioManifestEntry entry_from_json(const json& j) {
    AudioManifestEntry e;
    e.sample_id = j.at("sample_id").get<std::string>();
    e.engine_id = j.at("engine_id").get<std::string>();
    e.model_name = j.at("model_name").get<std::string>();
    e.voice = j.at("voice").get<std::string>();
    e.text_hash = j.at("text_hash").get<std::string>();
    e.file_path = j.at("file_path").get<std::string>();
    e.duration = j.at("duration").get<double>();
    e.char_count = j.at("char_count").get<size_t>();
    e.cost_estimate = j.at("cost_estimate").get<double>();
    e.status = synth_status_from_name(j.at("status").get<std::string>());
    e.error = j.value("error", "");
    return e;
}

// Retry loop shared by the single-sample and corpus paths: transport errors
// back off and retry, rejections propagate to the caller immediately.
Waveform attempt_synthesis(const std::string& text, TtsEngine& engine,
                           const RetryPolicy& retry) {
    int backoff_ms = retry.initial_backoff_ms;
    for (int attempt = 1;; ++attempt) {
        try {
            return engine.synthesize(text);
        } catch (const TransportError&) {
            if (attempt >= retry.attempts) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
    }
}

}  // namespace

void validate_engine_config(const EngineConfig& config) {
    if (config.model_name.empty()) throw Error(Errc::config, "engine model_name is empty");
    if (config.voice.empty()) throw Error(Errc::config, "engine voice is empty");
    if (config.target_sample_rate <= 0) {
        throw Error(Errc::config, "target_sample_rate must be positive");
    }
    if (config.engine_id == "remote_api") {
        if (config.endpoint.empty()) throw Error(Errc::config, "remote engine needs endpoint");
        if (config.api_key_env.empty()) {
            throw Error(Errc::config, "remote engine needs api_key_env naming the key variable");
        }
    } else if (config.engine_id == "local") {
        if (config.command.find("{textfile}") == std::string::npos ||
            config.command.find("{out}") == std::string::npos) {
            throw Error(Errc::config,
                        "local engine command must contain {textfile} and {out} placeholders");
        }
    } else if (config.engine_id != "mock") {
        throw Error(Errc::config, "unknown engine_id: " + config.engine_id);
    }
}

std::string synth_status_name(SynthStatus status) {
    switch (status) {
        case SynthStatus::success: return "success";
        case SynthStatus::failed: return "failed";
        case SynthStatus::budget_aborted: return "budget_aborted";
    }
    throw Error(Errc::io, "invalid synthesis status");
}

SynthStatus synth_status_from_name(const std::string& name) {
    if (name == "success") return SynthStatus::success;
    if (name == "failed") return SynthStatus::failed;
    if (name == "budget_aborted") return SynthStatus::budget_aborted;
    throw Error(Errc::io, "unknown synthesis status: " + name);
}

std::string cache_key(const std::string& engine_id, const std::string& model_name,
                      const std::string& voice, const std::string& text_hash) {
    return engine_id + '\x1f' + model_name + '\x1f' + voice + '\x1f' + text_hash;
}

AudioManifest::AudioManifest(std::filesystem::path file) : file_(std::move(file)) {
    if (!fs::exists(file_)) return;
    size_t line_no = 0;
    for (const std::string& line : read_lines(file_)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            entries_.push_back(entry_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(Errc::io,
                        file_.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        index(entries_.size() - 1);
    }
}

void AudioManifest::index(size_t i) {
    const AudioManifestEntry& e = entries_[i];
    if (e.status != SynthStatus::budget_aborted) {
        by_key_[cache_key(e.engine_id, e.model_name, e.voice, e.text_hash)] = i;
    }
}

void AudioManifest::append(AudioManifestEntry entry) {
    if (!file_.empty()) {
        if (file_.has_parent_path()) fs::create_directories(file_.parent_path());
        std::ofstream out(file_, std::ios::app);
        if (!out) throw Error(Errc::io, file_.string() + ": cannot append");
        out << entry_to_json(entry).dump() << '\n' << std::flush;
        if (!out) throw Error(Errc::io, file_.string() + ": write failed");
    }
    entries_.push_back(std::move(entry));
    index(entries_.size() - 1);
}

const AudioManifestEntry* AudioManifest::find(const std::string& key) const {
    auto it = by_key_.find(key);
    if (it == by_key_.end()) return nullptr;
    const AudioManifestEntry& e = entries_[it->second];
    if (e.status == SynthStatus::failed && starts_with(e.error, kTransportPrefix)) {
        return nullptr;
    }
    return &e;
}

const AudioManifestEntry* AudioManifest::find_sample(const std::string& sample_id,
                                                     const std::string& text_hash) const {
    const AudioManifestEntry* found = nullptr;
    for (const AudioManifestEntry& e : entries_) {
        if (e.status == SynthStatus::success && e.sample_id == sample_id &&
            e.text_hash == text_hash) {
            found = &e;
        }
    }
    return found;
}

MockEngine::MockEngine(const EngineConfig& config) : sample_rate_(config.target_sample_rate) {
    const char* delay = std::getenv("TTSAUG_MOCK_DELAY_MS");
    delay_ms_ = delay ? std::atoi(delay) : 0;
}

Waveform MockEngine::synthesize(const std::string& text) {
    calls_.fetch_add(1);
    size_t now = in_flight_.fetch_add(1) + 1;
    size_t seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));

    uint64_t h = fnv1a64(text);
    double freq = 120.0 + static_cast<double>(h % 400);
    double dur = std::min(30.0, std::max(0.2, 0.05 * static_cast<double>(text.size())));
    size_t n = static_cast<size_t>(std::llround(dur * sample_rate_));
    Waveform wave;
    wave.sample_rate = sample_rate_;
    wave.samples.resize(n);
    double w = 2.0 * M_PI * freq / sample_rate_;
    for (size_t i = 0; i < n; ++i) {
        wave.samples[i] = static_cast<float>(0.2 * std::sin(w * static_cast<double>(i)));
    }
    in_flight_.fetch_sub(1);
    return wave;
}

RemoteEngine::RemoteEngine(const EngineConfig& config) : config_(config) {
    validate_engine_config(config_);
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw Error(Errc::credentials,
                    "environment variable " + config_.api_key_env +
                        " is not set; the remote engine needs it for authentication");
    }
    api_key_ = key;
}

Waveform RemoteEngine::synthesize(const std::string& text) {
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(120, 0);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
    json body{{"model", config_.model_name},
              {"voice", config_.voice},
              {"input", text},
              {"response_format", config_.output_format}};
    auto res = client.Post("/v1/audio/speech", headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError(std::string(kTransportPrefix) + httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
        throw TransportError(std::string(kTransportPrefix) + "HTTP " +
                             std::to_string(res->status));
    }
    if (res->status != 200) {
        throw Error(Errc::synthesis, "engine rejected request (HTTP " +
                                         std::to_string(res->status) + "): " +
                                         res->body.substr(0, 200));
    }
    fs::path tmp = unique_temp_path(".wav");
    write_file_atomic(tmp, res->body);
    Waveform wave;
    try {
        wave = read_wav(tmp.string());
    } catch (...) {
        fs::remove(tmp);
        throw;
    }
    fs::remove(tmp);
    return at_target_rate(std::move(wave), config_.target_sample_rate);
}

LocalEngine::LocalEngine(const EngineConfig& config) : config_(config) {
    validate_engine_config(config_);
    if (config_.engine_id != "local") {
        throw Error(Errc::config, "LocalEngine requires engine_id=local");
    }
}

Waveform LocalEngine::synthesize(const std::string& text) {
    fs::path textfile = unique_temp_path(".txt");
    fs::path outfile = unique_temp_path(".wav");
    write_file_atomic(textfile, text);

    std::string cmd = config_.command;
    auto replace_all = [&cmd](const std::string& from, const std::string& to) {
        for (size_t pos = 0; (pos = cmd.find(from, pos)) != std::string::npos; pos += to.size()) {
            cmd.replace(pos, from.size(), to);
        }
    };
    replace_all("{textfile}", "'" + textfile.string() + "'");
    replace_all("{out}", "'" + outfile.string() + "'");

    int rc = std::system(cmd.c_str());
    auto cleanup = [&] {
        std::error_code ec;
        fs::remove(textfile, ec);
        fs::remove(outfile, ec);
    };
    if (rc == -1) {
        cleanup();
        throw TransportError(std::string(kTransportPrefix) + "failed to launch: " + cmd);
    }
    if (WIFEXITED(rc) && WEXITSTATUS(rc) != 0) {
        cleanup();
        throw Error(Errc::synthesis,
                    "synthesis command exited with status " + std::to_string(WEXITSTATUS(rc)));
    }
    if (!WIFEXITED(rc)) {
        cleanup();
        throw Error(Errc::synthesis, "synthesis command terminated abnormally");
    }
    if (!fs::exists(outfile)) {
        cleanup();
        throw Error(Errc::synthesis, "synthesis command produced no output file");
    }
    Waveform wave;
    try {
        wave = read_wav(outfile.string());
    } catch (...) {
        cleanup();
        throw;
    }
    cleanup();
    return at_target_rate(std::move(wave), config_.target_sample_rate);
}

std::unique_ptr<TtsEngine> make_engine(const EngineConfig& config) {
    validate_engine_config(config);
    if (config.engine_id == "mock") return std::make_unique<MockEngine>(config);
    if (config.engine_id == "remote_api") return std::make_unique<RemoteEngine>(config);
    if (config.engine_id == "local") return std::make_unique<LocalEngine>(config);
    throw Error(Errc::config, "unknown engine_id: " + config.engine_id);
}

double estimate_cost(const std::vector<std::string>& texts, double rate_per_char) {
    if (rate_per_char < 0) throw Error(Errc::config, "rate_per_char must be nonnegative");
    size_t chars = 0;
    for (const std::string& t : texts) chars += t.size();
    return static_cast<double>(chars) * rate_per_char;
}

namespace {

AudioManifestEntry base_entry(const std::string& sample_id, const EngineConfig& config,
                              const std::string& text_hash, size_t char_count) {
    AudioManifestEntry e;
    e.sample_id = sample_id;
    e.engine_id = config.engine_id;
    e.model_name = config.model_name;
    e.voice = config.voice;
    e.text_hash = text_hash;
    e.char_count = char_count;
    return e;
}

// Appends a per-sample copy of a cached entry (same audio, zero new cost)
// unless the cache hit already belongs to this sample.
const AudioManifestEntry& adopt_cached(const AudioManifestEntry& hit,
                                       const std::string& sample_id, AudioManifest& manifest) {
    if (hit.sample_id == sample_id) return hit;
    AudioManifestEntry copy = hit;
    copy.sample_id = sample_id;
    copy.cost_estimate = 0.0;
    manifest.append(std::move(copy));
    return manifest.entries().back();
}

}  // namespace

AudioManifestEntry synthesize_one(const std::string& text, const std::string& sample_id,
                                  TtsEngine& engine, const EngineConfig& config,
                                  AudioManifest& manifest, const fs::path& audio_dir,
                                  double rate_per_char, const RetryPolicy& retry) {
    std::string trimmed = trim(text);
    if (trimmed.empty()) {
        throw Error(Errc::synthesis, "empty synthesis text for sample " + sample_id);
    }
    std::string th = content_digest(trimmed);
    std::string key = cache_key(config.engine_id, config.model_name, config.voice, th);
    if (const AudioManifestEntry* hit = manifest.find(key)) {
        return adopt_cached(*hit, sample_id, manifest);
    }

    AudioManifestEntry entry = base_entry(sample_id, config, th, trimmed.size());
    entry.cost_estimate = static_cast<double>(trimmed.size()) * rate_per_char;
    Waveform wave;
    try {
        wave = attempt_synthesis(trimmed, engine, retry);
    } catch (const TransportError&) {
        throw;  // no manifest entry: a later run should retry
    } catch (const Error& e) {
        entry.status = SynthStatus::failed;
        entry.error = e.what();
        manifest.append(entry);
        return entry;
    }
    wave = at_target_rate(std::move(wave), config.target_sample_rate);

    fs::create_directories(audio_dir);
    fs::path file = audio_dir / (content_digest(key) + ".wav");
    write_wav_pcm16(file.string(), wave);
    entry.file_path = file.string();
    entry.duration = wave.duration();
    manifest.append(entry);
    return entry;
}

SynthesisReport synthesize_corpus(const std::vector<Sample>& samples, SelectRule rule,
                                  TtsEngine& engine, const EngineConfig& config,
                                  AudioManifest& manifest, double rate_per_char, double budget,
                                  size_t parallelism, const RetryPolicy& retry) {
    if (parallelism == 0) throw Error(Errc::config, "parallelism must be positive");
    if (budget < 0) throw Error(Errc::config, "budget must be nonnegative");
    if (rate_per_char < 0) throw Error(Errc::config, "rate_per_char must be nonnegative");

    fs::path audio_dir = manifest.file().empty()
                             ? unique_temp_path("_audio")
                             : manifest.file().parent_path() / "audio";

    std::mutex mu;
    std::condition_variable cv;
    std::set<std::string> in_flight;
    std::atomic<size_t> next{0};
    double spent = 0.0;
    bool aborted = false;
    SynthesisReport report;

    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < samples.size(); i = next.fetch_add(1)) {
            const Sample& sample = samples[i];
            std::string text = trim(select_target_text(sample, rule));
            if (text.empty()) {
                std::lock_guard<std::mutex> lock(mu);
                AudioManifestEntry e = base_entry(sample.id, config, content_digest(""), 0);
                e.status = SynthStatus::failed;
                e.error = "empty target text";
                manifest.append(std::move(e));
                report.failed += 1;
                continue;
            }
            std::string th = content_digest(text);
            std::string key = cache_key(config.engine_id, config.model_name, config.voice, th);
            double cost = static_cast<double>(text.size()) * rate_per_char;

            {
                std::unique_lock<std::mutex> lock(mu);
                cv.wait(lock, [&] { return in_flight.count(key) == 0; });
                if (const AudioManifestEntry* hit = manifest.find(key)) {
                    const AudioManifestEntry& mine = adopt_cached(*hit, sample.id, manifest);
                    if (mine.status == SynthStatus::success) {
                        report.cached += 1;
                    } else {
                        report.failed += 1;
                    }
                    continue;
                }
                if (aborted || spent + cost > budget + 1e-9) {
                    aborted = true;
                    AudioManifestEntry e = base_entry(sample.id, config, th, text.size());
                    e.status = SynthStatus::budget_aborted;
                    e.error = "budget exhausted before synthesis";
                    manifest.append(std::move(e));
                    report.aborted += 1;
                    continue;
                }
                spent += cost;
                in_flight.insert(key);
            }

            AudioManifestEntry entry = base_entry(sample.id, config, th, text.size());
            entry.cost_estimate = cost;
            try {
                Waveform wave = attempt_synthesis(text, engine, retry);
                wave = at_target_rate(std::move(wave), config.target_sample_rate);
                fs::create_directories(audio_dir);
                fs::path file = audio_dir / (content_digest(key) + ".wav");
                write_wav_pcm16(file.string(), wave);
                entry.file_path = file.string();
                entry.duration = wave.duration();
            } catch (const TransportError& e) {
                entry.status = SynthStatus::failed;
                entry.error = e.what();  // keeps the transport: prefix, retried next run
            } catch (const Error& e) {
                entry.status = SynthStatus::failed;
                entry.error = e.what();
            }

            {
                std::lock_guard<std::mutex> lock(mu);
                if (entry.status == SynthStatus::success) {
                    report.synthesized += 1;
                    report.chars_synthesized += entry.char_count;
                    report.cost_spent += cost;
                } else {
                    report.failed += 1;
                }
                manifest.append(std::move(entry));
                in_flight.erase(key);
            }
            cv.notify_all();
        }
    };

    size_t threads = std::min(parallelism, samples.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    return report;
}

}  // namespace ttsaug
