#include "rrseg/policy.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "rrseg/base64.hpp"
#include "rrseg/png_io.hpp"
#include "rrseg/rng.hpp"

#include <httplib.h>

namespace rrseg {

using nlohmann::json;

namespace {

constexpr const char* kThinkText =
    "comparing the map annotations with the satellite view to locate the target";

// log softmax(logits)[index] over a row, numerically stable.
double log_softmax_at(std::span<const double> row, int index) {
    double m = row[0];
    for (double v : row) {
        m = std::max(m, v);
    }
    double sum = 0.0;
    for (double v : row) {
        sum += std::exp(v - m);
    }
    return row[index] - m - std::log(sum);
}

void softmax_into(std::span<const double> row, double temperature, std::vector<double>& probs) {
    probs.resize(row.size());
    double m = row[0];
    for (double v : row) {
        m = std::max(m, v);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        probs[i] = std::exp((row[i] - m) / temperature);
        sum += probs[i];
    }
    for (double& p : probs) {
        p /= sum;
    }
}

int sample_category(std::span<const double> row, double temperature, Rng& rng,
                    std::vector<double>& scratch) {
    if (temperature <= 0.0) {
        int best = 0;
        for (int i = 1; i < static_cast<int>(row.size()); ++i) {
            if (row[i] > row[best]) {
                best = i;
            }
        }
        return best;
    }
    softmax_into(row, temperature, scratch);
    const double u = rng.uniform();
    double acc = 0.0;
    for (int i = 0; i < static_cast<int>(scratch.size()); ++i) {
        acc += scratch[i];
        if (u < acc) {
            return i;
        }
    }
    return static_cast<int>(scratch.size()) - 1;
}

}  // namespace

ToyPolicy::ToyPolicy(ToyPolicyConfig cfg) : cfg_(cfg) {
    if (cfg_.grid < 2 || cfg_.max_objects < 1 || cfg_.max_points < 1 ||
        cfg_.image_width <= 0 || cfg_.image_height <= 0) {
        throw std::invalid_argument("ToyPolicyConfig out of range");
    }
}

ToyPolicy::Head ToyPolicy::count_head(int stage) const {
    (void)stage;
    return {0, cfg_.max_objects + 1};
}

ToyPolicy::Head ToyPolicy::stage1_coord_head(int slot, int axis) const {
    const std::size_t base = static_cast<std::size_t>(cfg_.max_objects) + 1;
    return {base + (static_cast<std::size_t>(slot) * 4 + axis) * cfg_.grid, cfg_.grid};
}

std::size_t ToyPolicy::stage2_slot_size() const {
    return 4ul * cfg_.grid + (cfg_.max_points + 1) + static_cast<std::size_t>(cfg_.max_points) * 2 * cfg_.grid;
}

ToyPolicy::Head ToyPolicy::stage2_box_head(int slot, int axis) const {
    const std::size_t base = static_cast<std::size_t>(cfg_.max_objects) + 1 +
                             static_cast<std::size_t>(slot) * stage2_slot_size();
    return {base + static_cast<std::size_t>(axis) * cfg_.grid, cfg_.grid};
}

ToyPolicy::Head ToyPolicy::stage2_point_count_head(int slot) const {
    const std::size_t base = static_cast<std::size_t>(cfg_.max_objects) + 1 +
                             static_cast<std::size_t>(slot) * stage2_slot_size();
    return {base + 4ul * cfg_.grid, cfg_.max_points + 1};
}

ToyPolicy::Head ToyPolicy::stage2_point_head(int slot, int point, int axis) const {
    const std::size_t base = static_cast<std::size_t>(cfg_.max_objects) + 1 +
                             static_cast<std::size_t>(slot) * stage2_slot_size();
    return {base + 4ul * cfg_.grid + (cfg_.max_points + 1) +
                (static_cast<std::size_t>(point) * 2 + axis) * cfg_.grid,
            cfg_.grid};
}

std::size_t ToyPolicy::block_size(int stage) const {
    if (stage == 1) {
        return static_cast<std::size_t>(cfg_.max_objects) + 1 +
               static_cast<std::size_t>(cfg_.max_objects) * 4 * cfg_.grid;
    }
    return static_cast<std::size_t>(cfg_.max_objects) + 1 +
           static_cast<std::size_t>(cfg_.max_objects) * stage2_slot_size();
}

template <typename Fn>
void ToyPolicy::walk(int stage, std::span<const int> tokens, Fn&& fn) const {
    if (stage != 1 && stage != 2) {
        throw std::invalid_argument("stage must be 1 or 2");
    }
    std::size_t i = 0;
    auto take = [&](const Head& head) -> int {
        if (i >= tokens.size()) {
            throw std::out_of_range("token sequence truncated");
        }
        const int tok = tokens[i];
        if (tok < 0 || tok >= head.size) {
            throw std::out_of_range("token outside grammar head range");
        }
        fn(i, head, tok);
        ++i;
        return tok;
    };
    const int count = take(count_head(stage));
    for (int s = 0; s < count; ++s) {
        if (stage == 1) {
            for (int a = 0; a < 4; ++a) {
                take(stage1_coord_head(s, a));
            }
        } else {
            for (int a = 0; a < 4; ++a) {
                take(stage2_box_head(s, a));
            }
            const int points = take(stage2_point_count_head(s));
            for (int p = 0; p < points; ++p) {
                take(stage2_point_head(s, p, 0));
                take(stage2_point_head(s, p, 1));
            }
        }
    }
    if (i != tokens.size()) {
        throw std::out_of_range("trailing tokens beyond grammar");
    }
}

double ToyPolicy::decode_min(int token, double extent) const {
    return token * (extent / cfg_.grid);
}

double ToyPolicy::decode_max(int token, double extent) const {
    return (token + 1) * (extent / cfg_.grid);
}

double ToyPolicy::decode_center(int token, double extent) const {
    return (token + 0.5) * (extent / cfg_.grid);
}

Stage1Answer ToyPolicy::decode_stage1(std::span<const int> tokens) const {
    Stage1Answer ans;
    const double w = cfg_.image_width;
    const double h = cfg_.image_height;
    std::vector<int> coords;
    walk(1, tokens, [&](std::size_t, const Head&, int tok) { coords.push_back(tok); });
    const int count = coords[0];
    for (int s = 0; s < count; ++s) {
        const int* c = &coords[1 + s * 4];
        ans.boxes.push_back(BBox::normalized(decode_min(c[0], w), decode_min(c[1], h),
                                             decode_max(c[2], w), decode_max(c[3], h)));
    }
    return ans;
}

Stage2Answer ToyPolicy::decode_stage2(std::span<const int> tokens) const {
    Stage2Answer ans;
    const double w = cfg_.image_width;
    const double h = cfg_.image_height;
    std::size_t i = 1;  // past count token
    const int count = tokens.empty() ? 0 : tokens[0];
    // Validate via walk first; then re-read linearly.
    walk(2, tokens, [](std::size_t, const Head&, int) {});
    for (int s = 0; s < count; ++s) {
        PromptGroup g;
        g.box = BBox::normalized(decode_min(tokens[i], w), decode_min(tokens[i + 1], h),
                                 decode_max(tokens[i + 2], w), decode_max(tokens[i + 3], h));
        i += 4;
        const int points = tokens[i++];
        for (int p = 0; p < points; ++p) {
            g.points.push_back({decode_center(tokens[i], w), decode_center(tokens[i + 1], h)});
            i += 2;
        }
        ans.groups.push_back(std::move(g));
    }
    return ans;
}

std::string ToyPolicy::decode_text(int stage, std::span<const int> tokens) const {
    if (stage == 1) {
        return wrap_channels(kThinkText, serialize_answer(decode_stage1(tokens)));
    }
    return wrap_channels(kThinkText, serialize_answer(decode_stage2(tokens)));
}

const ToyPolicy::ContextParams& ToyPolicy::context(int stage, const std::string& key) const {
    const auto it = contexts_.find({stage, key});
    if (it == contexts_.end()) {
        throw std::out_of_range("unknown policy context: stage " + std::to_string(stage) +
                                " key " + key);
    }
    return it->second;
}

ToyPolicy::ContextParams& ToyPolicy::context_mut(int stage, const std::string& key) {
    std::lock_guard<std::mutex> lock(alloc_mutex_);
    auto [it, inserted] = contexts_.try_emplace({stage, key});
    if (inserted) {
        const std::size_t n = block_size(stage);
        it->second.cur.assign(n, 0.0);
        it->second.old.assign(n, 0.0);
        it->second.ref.assign(n, 0.0);
    }
    return it->second;
}

void ToyPolicy::ensure_context(int stage, const std::string& key) {
    context_mut(stage, key);
}

std::span<double> ToyPolicy::context_block(int stage, const std::string& key) {
    auto& ctx = context_mut(stage, key);
    return {ctx.cur.data(), ctx.cur.size()};
}

void ToyPolicy::refresh_old() {
    std::lock_guard<std::mutex> lock(alloc_mutex_);
    for (auto& [key, ctx] : contexts_) {
        ctx.old = ctx.cur;
    }
}

void ToyPolicy::freeze_ref() {
    std::lock_guard<std::mutex> lock(alloc_mutex_);
    for (auto& [key, ctx] : contexts_) {
        ctx.ref = ctx.cur;
    }
}

ToyPolicy::State ToyPolicy::save_state() const {
    std::lock_guard<std::mutex> lock(alloc_mutex_);
    State s;
    for (const auto& [key, ctx] : contexts_) {
        s.cur[key] = ctx.cur;
        s.old[key] = ctx.old;
        s.ref[key] = ctx.ref;
    }
    return s;
}

void ToyPolicy::restore_state(const State& state) {
    std::lock_guard<std::mutex> lock(alloc_mutex_);
    contexts_.clear();
    for (const auto& [key, cur] : state.cur) {
        ContextParams ctx;
        ctx.cur = cur;
        ctx.old = state.old.at(key);
        ctx.ref = state.ref.at(key);
        contexts_[key] = std::move(ctx);
    }
}

std::vector<TokenizedCompletion> ToyPolicy::sample_group(const PolicyContext& ctx,
                                                         int group_size, double temperature,
                                                         std::uint64_t seed) {
    if (group_size < 2) {
        throw std::invalid_argument("sample_group requires group_size >= 2");
    }
    const ContextParams& params = context_mut(ctx.stage, ctx.key);
    Rng rng(seed);
    std::vector<double> scratch;
    std::vector<TokenizedCompletion> out;
    out.reserve(group_size);
    for (int g = 0; g < group_size; ++g) {
        TokenizedCompletion tc;
        tc.stage = ctx.stage;
        tc.context_key = ctx.key;
        tc.trainable = true;

        auto sample_head = [&](const Head& head) {
            std::span<const double> row(params.cur.data() + head.offset,
                                        static_cast<std::size_t>(head.size));
            const int tok = sample_category(row, temperature, rng, scratch);
            tc.tokens.push_back(tok);
            return tok;
        };
        const int count = sample_head(count_head(ctx.stage));
        for (int s = 0; s < count; ++s) {
            if (ctx.stage == 1) {
                for (int a = 0; a < 4; ++a) {
                    sample_head(stage1_coord_head(s, a));
                }
            } else {
                for (int a = 0; a < 4; ++a) {
                    sample_head(stage2_box_head(s, a));
                }
                const int points = sample_head(stage2_point_count_head(s));
                for (int p = 0; p < points; ++p) {
                    sample_head(stage2_point_head(s, p, 0));
                    sample_head(stage2_point_head(s, p, 1));
                }
            }
        }
        tc.logp_current = per_token_logp(ctx.stage, ctx.key, tc.tokens, ParamSet::Current);
        tc.logp_old = per_token_logp(ctx.stage, ctx.key, tc.tokens, ParamSet::Old);
        tc.logp_ref = per_token_logp(ctx.stage, ctx.key, tc.tokens, ParamSet::Ref);
        tc.raw_text = decode_text(ctx.stage, tc.tokens);
        out.push_back(std::move(tc));
    }
    return out;
}

std::vector<double> ToyPolicy::per_token_logp(int stage, const std::string& key,
                                              std::span<const int> tokens,
                                              ParamSet which) const {
    const ContextParams& ctx = context(stage, key);
    const std::vector<double>& block = which == ParamSet::Current ? ctx.cur
                                        : which == ParamSet::Old  ? ctx.old
                                                                  : ctx.ref;
    std::vector<double> out(tokens.size(), 0.0);
    walk(stage, tokens, [&](std::size_t i, const Head& head, int tok) {
        std::span<const double> row(block.data() + head.offset,
                                    static_cast<std::size_t>(head.size));
        out[i] = log_softmax_at(row, tok);
    });
    return out;
}

void ToyPolicy::accumulate_weighted_logp_grad(int stage, const std::string& key,
                                              std::span<const int> tokens,
                                              std::span<const double> weights,
                                              std::span<double> grad_out) const {
    const ContextParams& ctx = context(stage, key);
    if (weights.size() != tokens.size()) {
        throw std::invalid_argument("weights/tokens size mismatch");
    }
    if (grad_out.size() != ctx.cur.size()) {
        throw std::invalid_argument("grad_out has wrong block size");
    }
    std::vector<double> probs;
    walk(stage, tokens, [&](std::size_t i, const Head& head, int tok) {
        const double w = weights[i];
        if (w == 0.0) {
            return;
        }
        std::span<const double> row(ctx.cur.data() + head.offset,
                                    static_cast<std::size_t>(head.size));
        softmax_into(row, 1.0, probs);
        // d logp[tok] / d logits = onehot(tok) - softmax(logits)
        for (int k = 0; k < head.size; ++k) {
            grad_out[head.offset + k] -= w * probs[k];
        }
        grad_out[head.offset + tok] += w;
    });
}

ToyPolicy::LogpGrad ToyPolicy::log_prob_and_grad(int stage, const std::string& key,
                                                 std::span<const int> tokens) const {
    LogpGrad out;
    out.per_token = per_token_logp(stage, key, tokens, ParamSet::Current);
    for (double v : out.per_token) {
        out.logp += v;
    }
    out.grad.assign(block_size(stage), 0.0);
    const std::vector<double> ones(tokens.size(), 1.0);
    accumulate_weighted_logp_grad(stage, key, tokens, ones, out.grad);
    return out;
}

RemoteChatPolicy::RemoteChatPolicy(RemoteChatConfig cfg) : cfg_(std::move(cfg)) {
    split_url(cfg_.url, host_, path_);
}

std::string RemoteChatPolicy::build_request_body(const PromptText& prompt,
                                                 const std::vector<const RgbImage*>& images,
                                                 double temperature, int max_tokens,
                                                 const std::string& model) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", prompt.text}});
    for (const RgbImage* img : images) {
        content.push_back({{"type", "image"}, {"data", base64_encode(encode_png(*img))}});
    }
    json req = {{"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})},
                {"temperature", temperature},
                {"max_tokens", max_tokens}};
    if (!model.empty()) {
        req["model"] = model;
    }
    return req.dump();
}

std::string RemoteChatPolicy::chat(const PromptText& prompt,
                                   const std::vector<const RgbImage*>& images,
                                   double temperature) const {
    const std::string body =
        build_request_body(prompt, images, temperature, cfg_.max_tokens, cfg_.model);
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        httplib::Client client(host_);
        const auto sec = static_cast<time_t>(cfg_.timeout_s);
        const auto usec = static_cast<time_t>((cfg_.timeout_s - sec) * 1e6);
        client.set_connection_timeout(sec, usec);
        client.set_read_timeout(sec, usec);
        client.set_write_timeout(sec, usec);
        auto res = client.Post(path_, body, "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        const json rsp = json::parse(res->body, nullptr, false);
        if (rsp.is_discarded() || !rsp.contains("text") || !rsp["text"].is_string()) {
            last_error = "malformed chat response";
            continue;
        }
        return rsp["text"].get<std::string>();
    }
    throw TransportError("chat request to " + cfg_.url + " failed: " + last_error);
}

std::vector<TokenizedCompletion> RemoteChatPolicy::sample_group(const PolicyContext& ctx,
                                                                int group_size,
                                                                double temperature,
                                                                std::uint64_t seed) {
    (void)seed;  // sampling happens server-side
    if (group_size < 2) {
        throw std::invalid_argument("sample_group requires group_size >= 2");
    }
    std::vector<TokenizedCompletion> out;
    out.reserve(group_size);
    for (int g = 0; g < group_size; ++g) {
        TokenizedCompletion tc;
        tc.stage = ctx.stage;
        tc.context_key = ctx.key;
        tc.trainable = false;
        tc.raw_text = chat(ctx.prompt, ctx.images, temperature);
        out.push_back(std::move(tc));
    }
    return out;
}

}  // namespace rrseg
