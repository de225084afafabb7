#pragma once

// Dataset schema, the deterministic synthetic scene generator, on-disk
// layout, dataset splitting and the caption vocabulary.
//
// On-disk layout (all paths relative to the dataset root):
//   manifest.json                      spec echo + per-sample id/split/label
//   samples/<id>/frames/%05d.png      RGB frames
//   samples/<id>/masks/%05d.png       8-bit gray, 0 or 255
//   samples/<id>/captions.jsonl       {"frame": int, "caption": string}
//   samples/<id>/audio.wav            PCM16 mono
//   samples/<id>/meta.json            fps, duration, object list

#include "ssu/image_io.hpp"
#include "ssu/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ssu::data {

namespace fs = std::filesystem;

struct ObjectClass {
    std::string shape;       // circle | square | triangle
    std::string color;       // catalogue color name
    double tone_hz = 440.0;  // pure tone emitted while sounding
    std::string pitch_word;  // word used in the caption template
};

inline std::vector<ObjectClass> default_classes() {
    return {
        {"circle", "red", 262.0, "low"},
        {"square", "green", 440.0, "mid"},
        {"triangle", "blue", 659.0, "high"},
        {"circle", "yellow", 880.0, "sharp"},
    };
}

inline std::array<std::uint8_t, 3> color_rgb(const std::string& name) {
    if (name == "red") return {220, 50, 47};
    if (name == "green") return {60, 190, 80};
    if (name == "blue") return {60, 100, 230};
    if (name == "yellow") return {230, 220, 60};
    if (name == "magenta") return {200, 60, 190};
    if (name == "cyan") return {60, 200, 210};
    throw ConfigError("dataset.classes.color: unknown color name '" + name + "'");
}

inline std::string motion_phrase(const std::string& motion) {
    if (motion == "static") return "staying still";
    if (motion == "linear") return "moving across";
    if (motion == "bounce") return "bouncing around";
    throw ConfigError("dataset.motions: unknown motion kind '" + motion + "'");
}

struct DatasetSpec {
    int n_samples = 240;
    int height = 64;
    int width = 64;
    double fps = 5.0;
    double duration = 3.0;
    int sample_rate = 16000;
    std::vector<ObjectClass> classes = default_classes();
    int max_objects = 2;
    std::vector<std::string> motions = {"static", "linear", "bounce"};
    double radius_min = 10.0;
    double radius_max = 18.0;
    double min_sound_fraction = 0.4;  // lower bound on the sounding interval
    double tone_amplitude = 0.3;
    std::array<double, 3> split_ratios = {0.75, 0.10, 0.15};
    bool balanced_split = true;
    std::uint64_t seed = 7;

    int frame_count() const { return static_cast<int>(std::lround(duration * fps)); }
    int waveform_length() const { return static_cast<int>(std::lround(duration * sample_rate)); }
    int samples_per_frame() const {
        return static_cast<int>(std::lround(static_cast<double>(sample_rate) / fps));
    }

    void validate() const {
        if (n_samples < 1) throw ConfigError("dataset.n_samples: must be >= 1");
        if (height < 16 || width < 16) throw ConfigError("dataset.height/width: must be >= 16");
        if (fps <= 0) throw ConfigError("dataset.fps: must be > 0");
        if (duration <= 0) throw ConfigError("dataset.duration: must be > 0");
        if (sample_rate < 1000) throw ConfigError("dataset.sample_rate: must be >= 1000");
        if (max_objects < 1) throw ConfigError("dataset.max_objects: must be >= 1");
        if (classes.empty()) throw ConfigError("dataset.classes: must not be empty");
        if (max_objects > static_cast<int>(classes.size()))
            throw ConfigError("dataset.max_objects: exceeds catalogue size");
        if (motions.empty()) throw ConfigError("dataset.motions: must not be empty");
        for (const auto& m : motions) motion_phrase(m);  // validates names
        for (const auto& c : classes) {
            if (c.tone_hz >= sample_rate / 2.0)
                throw ConfigError("dataset.classes.tone_hz: " + std::to_string(c.tone_hz) +
                                  " exceeds Nyquist for sample_rate");
            color_rgb(c.color);
        }
        if (radius_min < 2 || radius_max < radius_min)
            throw ConfigError("dataset.radius_min/radius_max: need 2 <= min <= max");
        if (min_sound_fraction <= 0 || min_sound_fraction > 1)
            throw ConfigError("dataset.min_sound_fraction: must be in (0, 1]");
        double rsum = split_ratios[0] + split_ratios[1] + split_ratios[2];
        if (std::abs(rsum - 1.0) > 1e-9)
            throw ConfigError("dataset.split_ratios: must sum to 1");
        if (frame_count() < 1) throw ConfigError("dataset.duration*fps: needs at least one frame");
    }

    Json to_json() const {
        Json jc = Json::array();
        for (const auto& c : classes)
            jc.push_back({{"shape", c.shape},
                          {"color", c.color},
                          {"tone_hz", c.tone_hz},
                          {"pitch_word", c.pitch_word}});
        return Json{{"n_samples", n_samples},
                    {"height", height},
                    {"width", width},
                    {"fps", fps},
                    {"duration", duration},
                    {"sample_rate", sample_rate},
                    {"classes", jc},
                    {"max_objects", max_objects},
                    {"motions", motions},
                    {"radius_min", radius_min},
                    {"radius_max", radius_max},
                    {"min_sound_fraction", min_sound_fraction},
                    {"tone_amplitude", tone_amplitude},
                    {"split_ratios", split_ratios},
                    {"balanced_split", balanced_split},
                    {"seed", seed}};
    }

    static DatasetSpec from_json(const Json& j, const std::string& path = "dataset") {
        JsonReader r(j, path);
        DatasetSpec s;
        s.n_samples = r.get("n_samples", s.n_samples);
        s.height = r.get("height", s.height);
        s.width = r.get("width", s.width);
        s.fps = r.get("fps", s.fps);
        s.duration = r.get("duration", s.duration);
        s.sample_rate = r.get("sample_rate", s.sample_rate);
        if (r.has("classes")) {
            s.classes.clear();
            for (const auto& jc : r.raw("classes")) {
                JsonReader rc(jc, path + ".classes[]");
                ObjectClass c;
                c.shape = rc.require<std::string>("shape");
                c.color = rc.require<std::string>("color");
                c.tone_hz = rc.require<double>("tone_hz");
                c.pitch_word = rc.require<std::string>("pitch_word");
                rc.finish();
                s.classes.push_back(c);
            }
        }
        s.max_objects = r.get("max_objects", s.max_objects);
        s.motions = r.get("motions", s.motions);
        s.radius_min = r.get("radius_min", s.radius_min);
        s.radius_max = r.get("radius_max", s.radius_max);
        s.min_sound_fraction = r.get("min_sound_fraction", s.min_sound_fraction);
        s.tone_amplitude = r.get("tone_amplitude", s.tone_amplitude);
        s.split_ratios = r.get("split_ratios", s.split_ratios);
        s.balanced_split = r.get("balanced_split", s.balanced_split);
        s.seed = r.get("seed", s.seed);
        r.finish();
        s.validate();
        return s;
    }
};

struct SceneObject {
    ObjectClass cls;
    std::string motion;
    double x0 = 0, y0 = 0;  // center at t = 0
    double vx = 0, vy = 0;  // px/s, used by linear and bounce
    double radius = 8;
    int sound_start = 0, sound_end = 0;  // frame interval [start, end)

    bool sounding(int frame) const { return frame >= sound_start && frame < sound_end; }
};

struct SSUSample {
    std::string id;
    std::vector<Image8> frames;  // T x H x W x 3
    std::vector<Image8> masks;   // T x H x W, values in {0, 1}
    std::vector<std::string> captions;
    std::vector<float> waveform;
    double fps = 5.0;
    double duration = 3.0;
    int sample_rate = 16000;
    std::vector<SceneObject> objects;  // empty for loaded samples without meta
    std::string label;                 // class label used for balanced splits

    int frame_count() const { return static_cast<int>(frames.size()); }
};

// ---- rendering -------------------------------------------------------------

namespace detail {

inline double bounce_fold(double x, double lo, double hi) {
    double span = hi - lo;
    if (span <= 0) return lo;
    double m = std::fmod(x - lo, 2.0 * span);
    if (m < 0) m += 2.0 * span;
    return lo + (m < span ? m : 2.0 * span - m);
}

inline void object_center(const SceneObject& o, double t_sec, int w, int h, double* cx,
                          double* cy) {
    if (o.motion == "static") {
        *cx = o.x0;
        *cy = o.y0;
        return;
    }
    double x = o.x0 + o.vx * t_sec;
    double y = o.y0 + o.vy * t_sec;
    if (o.motion == "bounce") {
        double margin = o.radius + 1.0;
        x = bounce_fold(x, margin, w - 1 - margin);
        y = bounce_fold(y, margin, h - 1 - margin);
    }
    *cx = x;
    *cy = y;
}

inline bool inside_shape(const std::string& shape, double px, double py, double cx, double cy,
                         double r) {
    double dx = px - cx, dy = py - cy;
    if (shape == "circle") return dx * dx + dy * dy <= r * r;
    if (shape == "square") return std::abs(dx) <= r && std::abs(dy) <= r;
    if (shape == "triangle") {
        // upward-pointing isoceles triangle: apex at (cx, cy - r), base at cy + r
        if (dy < -r || dy > r) return false;
        double half_width = (dy + r) * 0.5;
        return std::abs(dx) <= half_width;
    }
    throw ConfigError("unknown shape '" + shape + "'");
}

}  // namespace detail

// Exact pixel footprint of one object at one frame time; used both by the
// generator and by tests that re-render objects in isolation.
inline Image8 render_footprint(const SceneObject& o, int frame, double fps, int w, int h) {
    double t_sec = static_cast<double>(frame) / fps;
    double cx, cy;
    detail::object_center(o, t_sec, w, h, &cx, &cy);
    Image8 fp(h, w, 1, 0);
    int x_lo = std::max(0, static_cast<int>(std::floor(cx - o.radius - 1)));
    int x_hi = std::min(w - 1, static_cast<int>(std::ceil(cx + o.radius + 1)));
    int y_lo = std::max(0, static_cast<int>(std::floor(cy - o.radius - 1)));
    int y_hi = std::min(h - 1, static_cast<int>(std::ceil(cy + o.radius + 1)));
    for (int y = y_lo; y <= y_hi; ++y)
        for (int x = x_lo; x <= x_hi; ++x)
            if (detail::inside_shape(o.cls.shape, x, y, cx, cy, o.radius)) fp.at(y, x) = 1;
    return fp;
}

inline std::string object_caption_phrase(const SceneObject& o) {
    return "a " + o.cls.color + " " + o.cls.shape + " " + motion_phrase(o.motion) + " making a " +
           o.cls.pitch_word + " sound";
}

inline std::string frame_caption(const std::vector<SceneObject>& objects, int frame) {
    std::vector<std::string> phrases;
    for (const auto& o : objects)
        if (o.sounding(frame)) phrases.push_back(object_caption_phrase(o));
    if (phrases.empty()) return "silence";
    return join_words(phrases, " and ");
}

// ---- generator -------------------------------------------------------------

inline SSUSample generate_sample(const DatasetSpec& spec, int index, Rng rng) {
    const int T = spec.frame_count();
    const int W = spec.width, H = spec.height;
    SSUSample s;
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "clip_%05d", index);
        s.id = buf;
    }
    s.fps = spec.fps;
    s.duration = spec.duration;
    s.sample_rate = spec.sample_rate;

    int n_obj = 1 + static_cast<int>(rng.integer(static_cast<std::uint64_t>(spec.max_objects)));
    std::vector<int> class_order(spec.classes.size());
    for (std::size_t i = 0; i < class_order.size(); ++i) class_order[i] = static_cast<int>(i);
    rng.shuffle(class_order);

    auto place = [&](SceneObject& o) {
        double margin = o.radius + 2.0;
        o.x0 = rng.uniform(margin, W - 1 - margin);
        o.y0 = rng.uniform(margin, H - 1 - margin);
        if (o.motion == "linear") {
            double x1 = rng.uniform(margin, W - 1 - margin);
            double y1 = rng.uniform(margin, H - 1 - margin);
            o.vx = (x1 - o.x0) / spec.duration;
            o.vy = (y1 - o.y0) / spec.duration;
        } else if (o.motion == "bounce") {
            double speed = rng.uniform(W / 4.0, W / 2.0);
            double angle = rng.uniform(0.0, 2.0 * M_PI);
            o.vx = speed * std::cos(angle);
            o.vy = speed * std::sin(angle);
        }
    };
    // conservative per-frame separation test; shapes fit in a circle of 1.5 r
    auto separated = [&](const SceneObject& a, const SceneObject& b) {
        for (int t = 0; t < T; ++t) {
            double ax, ay, bx, by;
            detail::object_center(a, t / spec.fps, W, H, &ax, &ay);
            detail::object_center(b, t / spec.fps, W, H, &bx, &by);
            double need = 1.5 * (a.radius + b.radius) + 2.0;
            double dx = ax - bx, dy = ay - by;
            if (dx * dx + dy * dy < need * need) return false;
        }
        return true;
    };

    for (int k = 0; k < n_obj; ++k) {
        SceneObject o;
        o.cls = spec.classes[static_cast<std::size_t>(class_order[static_cast<std::size_t>(k)])];
        o.motion = spec.motions[rng.integer(spec.motions.size())];
        o.radius = rng.uniform(spec.radius_min, spec.radius_max);
        place(o);
        for (int attempt = 0; attempt < 64; ++attempt) {
            bool ok = true;
            for (int j = 0; j < k; ++j)
                if (!separated(s.objects[static_cast<std::size_t>(j)], o)) ok = false;
            if (ok) break;
            place(o);
        }
        int min_len = std::max(1, static_cast<int>(std::ceil(spec.min_sound_fraction * T)));
        int len = min_len + static_cast<int>(rng.integer(static_cast<std::uint64_t>(T - min_len + 1)));
        o.sound_start = static_cast<int>(rng.integer(static_cast<std::uint64_t>(T - len + 1)));
        o.sound_end = o.sound_start + len;
        s.objects.push_back(o);
    }
    s.label = s.objects.front().cls.color + "_" + s.objects.front().cls.shape;

    // frames + masks + captions
    s.frames.reserve(static_cast<std::size_t>(T));
    s.masks.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        Image8 frame(H, W, 3, 0);
        Image8 mask(H, W, 1, 0);
        for (const auto& o : s.objects) {
            Image8 fp = render_footprint(o, t, spec.fps, W, H);
            auto rgb = color_rgb(o.cls.color);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    if (fp.at(y, x)) {
                        frame.at(y, x, 0) = rgb[0];
                        frame.at(y, x, 1) = rgb[1];
                        frame.at(y, x, 2) = rgb[2];
                        if (o.sounding(t)) mask.at(y, x) = 1;
                    }
        }
        s.frames.push_back(std::move(frame));
        s.masks.push_back(std::move(mask));
        s.captions.push_back(frame_caption(s.objects, t));
    }

    // audio: sum of pure tones over each object's sounding frames
    const int n_wave = spec.waveform_length();
    const int spf = spec.samples_per_frame();
    s.waveform.assign(static_cast<std::size_t>(n_wave), 0.0f);
    for (const auto& o : s.objects) {
        for (int t = o.sound_start; t < o.sound_end && t < T; ++t) {
            int lo = t * spf;
            int hi = std::min(n_wave, lo + spf);
            for (int n = lo; n < hi; ++n) {
                double t_sec = static_cast<double>(n) / spec.sample_rate;
                s.waveform[static_cast<std::size_t>(n)] += static_cast<float>(
                    spec.tone_amplitude * std::sin(2.0 * M_PI * o.cls.tone_hz * t_sec));
            }
        }
    }
    return s;
}

inline std::vector<SSUSample> generate_synthetic_dataset(const DatasetSpec& spec) {
    spec.validate();
    Rng root(spec.seed);
    std::vector<SSUSample> out;
    out.reserve(static_cast<std::size_t>(spec.n_samples));
    for (int i = 0; i < spec.n_samples; ++i)
        out.push_back(generate_sample(spec, i, root.child(static_cast<std::uint64_t>(i))));
    return out;
}

// ---- splitting -------------------------------------------------------------

enum class Split { train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split name '" + s + "'");
}

struct SplitAssignment {
    std::vector<Split> labels;  // aligned with the input id order
    std::array<double, 3> ratios;
    std::uint64_t seed = 0;
};

// Largest-remainder apportionment of n into three parts matching ratios.
inline std::array<int, 3> apportion(int n, const std::array<double, 3>& ratios) {
    double rsum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(rsum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    std::array<int, 3> counts{};
    std::array<double, 3> frac{};
    int used = 0;
    for (int i = 0; i < 3; ++i) {
        double exact = ratios[static_cast<std::size_t>(i)] * n;
        counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact + 1e-12));
        frac[static_cast<std::size_t>(i)] = exact - counts[static_cast<std::size_t>(i)];
        used += counts[static_cast<std::size_t>(i)];
    }
    while (used < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (frac[static_cast<std::size_t>(i)] > frac[static_cast<std::size_t>(best)] + 1e-12)
                best = i;
        counts[static_cast<std::size_t>(best)] += 1;
        frac[static_cast<std::size_t>(best)] = -1;
        ++used;
    }
    return counts;
}

// Deterministic shuffle-then-assign split. When labels are provided the test
// set takes an equal share of every class (quotas differing by at most one).
inline SplitAssignment split_dataset(const std::vector<std::string>& ids,
                                     const std::array<double, 3>& ratios, std::uint64_t seed,
                                     const std::vector<std::string>* labels = nullptr) {
    const int n = static_cast<int>(ids.size());
    std::array<int, 3> counts = apportion(n, ratios);
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(order);

    SplitAssignment out;
    out.ratios = ratios;
    out.seed = seed;
    out.labels.assign(static_cast<std::size_t>(n), Split::train);

    std::vector<int> pool;
    if (labels) {
        if (static_cast<int>(labels->size()) != n)
            throw ConfigError("split labels must match id count");
        // class quotas for the test set, spread as evenly as possible
        std::map<std::string, std::vector<int>> members;  // shuffled order within class
        for (int oi : order) members[(*labels)[static_cast<std::size_t>(oi)]].push_back(oi);
        const int k = static_cast<int>(members.size());
        std::vector<std::string> class_names;
        for (const auto& [name, _] : members) class_names.push_back(name);
        int test_total = counts[2];
        std::vector<int> quota(static_cast<std::size_t>(k), test_total / std::max(1, k));
        for (int i = 0; i < test_total % std::max(1, k); ++i) quota[static_cast<std::size_t>(i)] += 1;
        // spill quota a class cannot fill onto later classes
        std::vector<int> taken(static_cast<std::size_t>(k), 0);
        int assigned = 0;
        for (int round = 0; round < 2 && assigned < test_total; ++round) {
            for (int ci = 0; ci < k && assigned < test_total; ++ci) {
                auto& m = members[class_names[static_cast<std::size_t>(ci)]];
                int want = round == 0 ? std::min(quota[static_cast<std::size_t>(ci)],
                                                 static_cast<int>(m.size()))
                                      : static_cast<int>(m.size());
                while (taken[static_cast<std::size_t>(ci)] < want && assigned < test_total) {
                    int oi = m[static_cast<std::size_t>(taken[static_cast<std::size_t>(ci)])];
                    out.labels[static_cast<std::size_t>(oi)] = Split::test;
                    ++taken[static_cast<std::size_t>(ci)];
                    ++assigned;
                }
            }
        }
        for (int oi : order)
            if (out.labels[static_cast<std::size_t>(oi)] != Split::test) pool.push_back(oi);
    } else {
        pool = order;
        for (int i = counts[0] + counts[1]; i < n; ++i)
            out.labels[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])] = Split::test;
        pool.resize(static_cast<std::size_t>(counts[0] + counts[1]));
    }

    for (std::size_t i = 0; i < pool.size(); ++i)
        out.labels[static_cast<std::size_t>(pool[i])] =
            static_cast<int>(i) < counts[0] ? Split::train : Split::val;
    return out;
}

// ---- vocabulary ------------------------------------------------------------

class Vocabulary {
  public:
    static constexpr int kBos = 0;
    static constexpr int kEos = 1;
    static constexpr int kPad = 2;
    static constexpr int kUnk = 3;

    Vocabulary() = default;

    // Word-level vocabulary: lowercased whitespace tokens, sorted for a
    // corpus-order-independent layout, specials pinned at indices 0-3.
    static Vocabulary build(const std::vector<std::string>& captions) {
        if (captions.empty()) throw ConfigError("vocabulary: empty caption corpus");
        std::set<std::string> words;
        for (const auto& c : captions)
            for (const auto& w : split_words(lowercase(c))) words.insert(w);
        Vocabulary v;
        v.tokens_ = {"<bos>", "<eos>", "<pad>", "<unk>"};
        for (const auto& w : words) v.tokens_.push_back(w);
        v.rebuild_index();
        return v;
    }

    static Vocabulary from_tokens(std::vector<std::string> tokens) {
        Vocabulary v;
        v.tokens_ = std::move(tokens);
        if (v.tokens_.size() < 4 || v.tokens_[0] != "<bos>" || v.tokens_[1] != "<eos>" ||
            v.tokens_[2] != "<pad>" || v.tokens_[3] != "<unk>")
            throw IoError("vocabulary: reserved specials missing or misplaced");
        v.rebuild_index();
        return v;
    }

    int size() const { return static_cast<int>(tokens_.size()); }

    const std::vector<std::string>& tokens() const { return tokens_; }

    int lookup(const std::string& word) const {
        auto it = index_.find(word);
        return it == index_.end() ? kUnk : it->second;
    }

    std::vector<int> encode(const std::string& text) const {
        std::vector<int> out{kBos};
        for (const auto& w : split_words(lowercase(text))) out.push_back(lookup(w));
        out.push_back(kEos);
        return out;
    }

    std::string decode(const std::vector<int>& seq) const {
        std::vector<std::string> words;
        for (int id : seq) {
            if (id < 0 || id >= size()) throw ConfigError("decode: token id out of range");
            if (id == kBos || id == kEos || id == kPad) continue;
            words.push_back(tokens_[static_cast<std::size_t>(id)]);
        }
        return join_words(words);
    }

    bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

  private:
    void rebuild_index() {
        index_.clear();
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            if (index_.count(tokens_[i]))
                throw IoError("vocabulary: duplicate token '" + tokens_[i] + "'");
            index_[tokens_[i]] = static_cast<int>(i);
        }
    }

    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

inline std::string normalize_caption(const std::string& s) {
    return join_words(split_words(lowercase(s)));
}

// ---- on-disk layout ---------------------------------------------------------

inline fs::path sample_dir(const fs::path& root, const std::string& id) {
    return root / "samples" / id;
}

inline std::string frame_file_name(int t) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d.png", t);
    return buf;
}

inline void write_sample(const SSUSample& s, const fs::path& root) {
    fs::path dir = sample_dir(root, s.id);
    fs::create_directories(dir / "frames");
    fs::create_directories(dir / "masks");
    for (int t = 0; t < s.frame_count(); ++t) {
        write_png(dir / "frames" / frame_file_name(t), s.frames[static_cast<std::size_t>(t)]);
        Image8 m = s.masks[static_cast<std::size_t>(t)];
        for (auto& px : m.data) px = px ? 255 : 0;
        write_png(dir / "masks" / frame_file_name(t), m);
    }
    {
        std::ofstream f(dir / "captions.jsonl");
        if (!f) throw IoError("cannot write " + (dir / "captions.jsonl").string());
        for (int t = 0; t < s.frame_count(); ++t)
            f << Json{{"frame", t}, {"caption", s.captions[static_cast<std::size_t>(t)]}}.dump()
              << "\n";
    }
    write_wav(dir / "audio.wav", s.waveform, s.sample_rate);
    {
        Json objs = Json::array();
        for (const auto& o : s.objects)
            objs.push_back({{"shape", o.cls.shape},
                            {"color", o.cls.color},
                            {"tone_hz", o.cls.tone_hz},
                            {"pitch_word", o.cls.pitch_word},
                            {"motion", o.motion},
                            {"x0", o.x0},
                            {"y0", o.y0},
                            {"vx", o.vx},
                            {"vy", o.vy},
                            {"radius", o.radius},
                            {"sound_start", o.sound_start},
                            {"sound_end", o.sound_end}});
        Json meta{{"id", s.id},       {"fps", s.fps},
                  {"duration", s.duration}, {"sample_rate", s.sample_rate},
                  {"label", s.label},       {"objects", objs}};
        std::ofstream f(dir / "meta.json");
        if (!f) throw IoError("cannot write " + (dir / "meta.json").string());
        f << meta.dump(2) << "\n";
    }
}

// Strict mode rejects mask pixels outside {0, 255}; lenient mode binarizes
// at 128 instead.
inline SSUSample load_sample(const fs::path& root, const std::string& id,
                             bool lenient_masks = false) {
    fs::path dir = sample_dir(root, id);
    if (!fs::exists(dir)) throw IoError("sample directory missing: " + dir.string());
    SSUSample s;
    s.id = id;

    Json meta;
    {
        fs::path mp = dir / "meta.json";
        std::ifstream f(mp);
        if (!f) throw IoError("missing file: " + mp.string());
        try {
            f >> meta;
        } catch (const Json::exception& e) {
            throw IoError(mp.string() + ": " + e.what());
        }
    }
    s.fps = meta.at("fps").get<double>();
    s.duration = meta.at("duration").get<double>();
    s.sample_rate = meta.at("sample_rate").get<int>();
    s.label = meta.value("label", std::string());
    if (meta.contains("objects")) {
        for (const auto& jo : meta.at("objects")) {
            SceneObject o;
            o.cls.shape = jo.at("shape").get<std::string>();
            o.cls.color = jo.at("color").get<std::string>();
            o.cls.tone_hz = jo.at("tone_hz").get<double>();
            o.cls.pitch_word = jo.at("pitch_word").get<std::string>();
            o.motion = jo.at("motion").get<std::string>();
            o.x0 = jo.at("x0").get<double>();
            o.y0 = jo.at("y0").get<double>();
            o.vx = jo.at("vx").get<double>();
            o.vy = jo.at("vy").get<double>();
            o.radius = jo.at("radius").get<double>();
            o.sound_start = jo.at("sound_start").get<int>();
            o.sound_end = jo.at("sound_end").get<int>();
            s.objects.push_back(o);
        }
    }

    const int T = static_cast<int>(std::lround(s.duration * s.fps));
    for (int t = 0; t < T; ++t) {
        fs::path fp = dir / "frames" / frame_file_name(t);
        if (!fs::exists(fp)) throw IoError("frame count mismatch: missing " + fp.string());
        Image8 frame = read_png(fp);
        if (frame.c != 3) throw IoError(fp.string() + ": expected RGB frame");
        fs::path mp = dir / "masks" / frame_file_name(t);
        if (!fs::exists(mp)) throw IoError("mask count mismatch: missing " + mp.string());
        Image8 mask = read_png(mp);
        if (mask.c != 1) throw IoError(mp.string() + ": expected grayscale mask");
        if (mask.h != frame.h || mask.w != frame.w)
            throw IoError(mp.string() + ": mask size differs from frame size");
        for (auto& px : mask.data) {
            if (px != 0 && px != 255) {
                if (!lenient_masks)
                    throw IoError(mp.string() + ": non-binary mask value " + std::to_string(px));
                px = px >= 128 ? 1 : 0;
            } else {
                px = px ? 1 : 0;
            }
        }
        if (!s.frames.empty() &&
            (frame.h != s.frames[0].h || frame.w != s.frames[0].w))
            throw IoError(fp.string() + ": frame size differs within sample");
        s.frames.push_back(std::move(frame));
        s.masks.push_back(std::move(mask));
    }

    {
        fs::path cp = dir / "captions.jsonl";
        std::ifstream f(cp);
        if (!f) throw IoError("missing file: " + cp.string());
        std::string line;
        int expect = 0;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            Json j;
            try {
                j = Json::parse(line);
            } catch (const Json::exception& e) {
                throw IoError(cp.string() + ": " + e.what());
            }
            if (j.at("frame").get<int>() != expect)
                throw IoError(cp.string() + ": caption records out of order");
            s.captions.push_back(j.at("caption").get<std::string>());
            ++expect;
        }
        if (expect != T)
            throw IoError(cp.string() + ": caption count mismatch (" + std::to_string(expect) +
                          " records for " + std::to_string(T) + " frames)");
    }

    int sr = 0;
    s.waveform = read_wav(dir / "audio.wav", &sr);
    if (sr != s.sample_rate)
        throw IoError((dir / "audio.wav").string() + ": sample rate differs from meta.json");
    return s;
}

struct ManifestEntry {
    std::string id;
    Split split = Split::train;
    std::string label;
};

struct Manifest {
    Json spec_echo;
    std::vector<ManifestEntry> entries;

    std::vector<std::string> ids(std::optional<Split> filter = std::nullopt) const {
        std::vector<std::string> out;
        for (const auto& e : entries)
            if (!filter || e.split == *filter) out.push_back(e.id);
        return out;
    }
};

inline void write_manifest(const fs::path& root, const Manifest& m) {
    Json samples = Json::array();
    for (const auto& e : m.entries)
        samples.push_back({{"id", e.id}, {"split", split_name(e.split)}, {"label", e.label}});
    Json j{{"dataset_spec", m.spec_echo}, {"samples", samples}};
    std::ofstream f(root / "manifest.json");
    if (!f) throw IoError("cannot write " + (root / "manifest.json").string());
    f << j.dump(2) << "\n";
}

inline Manifest read_manifest(const fs::path& root) {
    fs::path mp = root / "manifest.json";
    std::ifstream f(mp);
    if (!f) throw IoError("missing file: " + mp.string());
    Json j;
    try {
        f >> j;
    } catch (const Json::exception& e) {
        throw IoError(mp.string() + ": " + e.what());
    }
    Manifest m;
    m.spec_echo = j.at("dataset_spec");
    for (const auto& js : j.at("samples")) {
        ManifestEntry e;
        e.id = js.at("id").get<std::string>();
        e.split = split_from_name(js.at("split").get<std::string>());
        e.label = js.value("label", std::string());
        m.entries.push_back(e);
    }
    return m;
}

// Generates, splits and writes a complete dataset; returns its manifest.
inline Manifest write_dataset(const DatasetSpec& spec, const fs::path& root) {
    std::vector<SSUSample> samples = generate_synthetic_dataset(spec);
    std::vector<std::string> ids, labels;
    for (const auto& s : samples) {
        ids.push_back(s.id);
        labels.push_back(s.label);
    }
    SplitAssignment split = split_dataset(ids, spec.split_ratios, spec.seed,
                                          spec.balanced_split ? &labels : nullptr);
    fs::create_directories(root);
    Manifest m;
    m.spec_echo = spec.to_json();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        write_sample(samples[i], root);
        m.entries.push_back({ids[i], split.labels[i], labels[i]});
    }
    write_manifest(root, m);
    return m;
}

}  // namespace ssu::data
