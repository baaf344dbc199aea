#include "spinsum/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "spinsum/error.hpp"
#include "spinsum/json_io.hpp"
#include "spinsum/util.hpp"

namespace spinsum {

using nlohmann::json;

// ---- config ---------------------------------------------------------------

ModelConfig ModelConfig::desk_profile() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_profile() {
    ModelConfig c;
    c.token_emb_dim = 768;
    c.spine_label_emb_dim = 64;
    c.spine_gru_hidden = 512;
    c.model_dim = 768;
    c.ff_dim = 3072;
    c.num_layers = 12;
    c.num_heads = 12;
    c.attention_window = 256;
    c.max_position = 65536;
    return c;
}

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v < 1) throw ConfigError(std::string("model.") + name + " must be >= 1");
    };
    positive(token_emb_dim, "token_emb_dim");
    positive(spine_label_emb_dim, "spine_label_emb_dim");
    positive(spine_gru_hidden, "spine_gru_hidden");
    positive(model_dim, "model_dim");
    positive(ff_dim, "ff_dim");
    positive(num_layers, "num_layers");
    positive(num_heads, "num_heads");
    positive(attention_window, "attention_window");
    positive(max_position, "max_position");
    if (model_dim % num_heads != 0) {
        throw ConfigError("model.model_dim must be divisible by model.num_heads");
    }
}

json model_config_to_json_obj(const ModelConfig& c) {
    return json{{"token_emb_dim", c.token_emb_dim},
                {"spine_label_emb_dim", c.spine_label_emb_dim},
                {"spine_gru_hidden", c.spine_gru_hidden},
                {"model_dim", c.model_dim},
                {"ff_dim", c.ff_dim},
                {"num_layers", c.num_layers},
                {"num_heads", c.num_heads},
                {"attention_window", c.attention_window},
                {"max_position", c.max_position},
                {"use_positions", c.use_positions},
                {"seed", c.seed}};
}

ModelConfig model_config_from_json_obj(const json& j, ModelConfig base) {
    ModelConfig c = base;
    auto grab = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    grab("token_emb_dim", c.token_emb_dim);
    grab("spine_label_emb_dim", c.spine_label_emb_dim);
    grab("spine_gru_hidden", c.spine_gru_hidden);
    grab("model_dim", c.model_dim);
    grab("ff_dim", c.ff_dim);
    grab("num_layers", c.num_layers);
    grab("num_heads", c.num_heads);
    grab("attention_window", c.attention_window);
    grab("max_position", c.max_position);
    grab("use_positions", c.use_positions);
    grab("seed", c.seed);
    return c;
}

// ---- vocab ------------------------------------------------------------------

Vocab::Vocab() {
    add("<cls>");
    add("<sep>");
    add("<unk>");
}

int Vocab::add(const std::string& entry) {
    auto it = index_.find(entry);
    if (it != index_.end()) return it->second;
    int id = static_cast<int>(entries_.size());
    entries_.push_back(entry);
    index_[entry] = id;
    return id;
}

int Vocab::lookup(const std::string& entry) const {
    auto it = index_.find(entry);
    return it == index_.end() ? kUnk : it->second;
}

Vocab build_token_vocab(const std::vector<Chapter>& chapters, const std::string& split) {
    Vocab vocab;
    for (const Chapter& ch : chapters) {
        if (ch.split != split) continue;
        for (const Unit& unit : ch.units) {
            for (const std::string& token : unit.tokens) vocab.add(token);
        }
    }
    return vocab;
}

Vocab build_label_vocab(const std::vector<Chapter>& chapters, const std::string& split) {
    Vocab vocab;
    for (const Chapter& ch : chapters) {
        if (ch.split != split) continue;
        for (const Unit& unit : ch.units) {
            for (const Spine& spine : unit.spines) {
                for (const std::string& label : spine.labels) vocab.add(label);
            }
        }
    }
    return vocab;
}

// ---- parameters ---------------------------------------------------------------

Tensor& ParamStore::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw InternalError("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw InternalError("unknown parameter: " + name);
    return it->second;
}

ParamStore ParamStore::initialize(const ModelConfig& config, std::size_t token_vocab,
                                  std::size_t label_vocab) {
    config.validate();
    ParamStore store;
    auto& t = store.tensors_;
    const std::size_t e = config.token_emb_dim;
    const std::size_t le = config.spine_label_emb_dim;
    const std::size_t h = config.spine_gru_hidden;
    const std::size_t d = config.model_dim;
    const std::size_t f = config.ff_dim;

    t["emb.token"] = Tensor(token_vocab, e);
    t["emb.label"] = Tensor(label_vocab, le);
    for (const char* dir : {"fw", "bw"}) {
        for (const char* gate : {"r", "z", "n"}) {
            t["gru." + std::string(dir) + ".w_" + gate] = Tensor(le, h);
            t["gru." + std::string(dir) + ".u_" + gate] = Tensor(h, h);
            t["gru." + std::string(dir) + ".b_" + gate] = Tensor(1, h);
        }
    }
    t["proj.w"] = Tensor(config.concat_dim(), d);
    t["proj.b"] = Tensor(1, d);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        for (const char* m : {"wq", "wk", "wv", "wo"}) t[p + "attn." + m] = Tensor(d, d);
        // No key bias: softmax is invariant to a per-row constant shift, so
        // a key bias would never receive gradient.
        for (const char* b : {"bq", "bv", "bo"}) t[p + "attn." + b] = Tensor(1, d);
        t[p + "ln1.gamma"] = Tensor(1, d);
        t[p + "ln1.beta"] = Tensor(1, d);
        t[p + "ff.w1"] = Tensor(d, f);
        t[p + "ff.b1"] = Tensor(1, f);
        t[p + "ff.w2"] = Tensor(f, d);
        t[p + "ff.b2"] = Tensor(1, d);
        t[p + "ln2.gamma"] = Tensor(1, d);
        t[p + "ln2.beta"] = Tensor(1, d);
    }
    t["head.w"] = Tensor(d, 1);
    t["head.b"] = Tensor(1, 1);

    // Uniform fan-in initialization, embeddings scaled by their width;
    // biases zero; layer-norm gains one. Map order + a single engine make
    // initialization bit-reproducible for a given seed.
    std::mt19937_64 rng(config.seed);
    for (auto& [name, tensor] : t) {
        std::string leaf_name = name.substr(name.rfind('.') + 1);
        if (leaf_name[0] == 'b') continue;  // biases and beta stay zero
        if (leaf_name == "gamma") {
            std::fill(tensor.data.begin(), tensor.data.end(), 1.0);
            continue;
        }
        double fan_in = name.rfind("emb.", 0) == 0 ? static_cast<double>(tensor.cols)
                                                   : static_cast<double>(tensor.rows);
        double bound = 1.0 / std::sqrt(fan_in);
        // The scoring head starts close to zero so fresh models emit
        // near-0.5 scores regardless of label balance.
        if (name == "head.w") bound *= 0.2;
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& x : tensor.data) x = dist(rng);
    }
    // Query and key projections start tied so the position-encoding dot
    // product keeps its own-neighborhood peak at initialization; they
    // diverge freely during training.
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        std::string p = "layer" + std::to_string(l) + ".attn.";
        t[p + "wk"] = t[p + "wq"];
    }
    return store;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

void put_str(std::string& out, const std::string& s) {
    put_u64(out, s.size());
    out.append(s);
}

struct ByteReader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw DataError("truncated binary payload");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, bytes.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        std::uint64_t n = u64();
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

constexpr char kStoreMagic[] = "SPSTORE1";
constexpr char kCkptMagic[] = "SPCKPT01";

}  // namespace

std::string ParamStore::serialize() const {
    std::string out(kStoreMagic, 8);
    put_u64(out, tensors_.size());
    for (const auto& [name, tensor] : tensors_) {
        put_str(out, name);
        put_u64(out, tensor.rows);
        put_u64(out, tensor.cols);
        out.append(reinterpret_cast<const char*>(tensor.data.data()),
                   tensor.data.size() * sizeof(double));
    }
    return out;
}

ParamStore ParamStore::deserialize(const std::string& bytes) {
    if (bytes.size() < 8 || bytes.compare(0, 8, kStoreMagic) != 0) {
        throw DataError("not a parameter blob (bad magic)");
    }
    ByteReader reader{bytes, 8};
    ParamStore store;
    std::uint64_t count = reader.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = reader.str();
        std::uint64_t rows = reader.u64();
        std::uint64_t cols = reader.u64();
        Tensor t(rows, cols);
        reader.need(t.data.size() * sizeof(double));
        std::memcpy(t.data.data(), bytes.data() + reader.pos, t.data.size() * sizeof(double));
        reader.pos += t.data.size() * sizeof(double);
        store.tensors_[name] = std::move(t);
    }
    return store;
}

std::uint64_t ParamStore::content_hash() const { return util::fnv1a64(serialize()); }

void Checkpoint::save(const std::string& path) const {
    std::string out(kCkptMagic, 8);
    put_u32(out, 1);
    put_str(out, meta_json);
    put_str(out, model_config_to_json_obj(config).dump());
    auto put_vocab = [&out](const Vocab& vocab) {
        put_u64(out, vocab.size());
        for (const std::string& entry : vocab.entries()) put_str(out, entry);
    };
    put_vocab(token_vocab);
    put_vocab(label_vocab);
    put_str(out, params.serialize());
    util::write_file(path, out);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::string bytes = util::read_file(path);
    if (bytes.size() < 8 || bytes.compare(0, 8, kCkptMagic) != 0) {
        throw DataError("not a checkpoint file: " + path);
    }
    ByteReader reader{bytes, 8};
    std::uint32_t version = reader.u32();
    if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.meta_json = reader.str();
    try {
        ckpt.config = model_config_from_json_obj(json::parse(reader.str()), ModelConfig{});
    } catch (const json::exception& e) {
        throw DataError(std::string("corrupt checkpoint config: ") + e.what());
    }
    auto read_vocab = [&reader]() {
        Vocab vocab;
        std::uint64_t n = reader.u64();
        for (std::uint64_t i = 0; i < n; ++i) vocab.add(reader.str());
        return vocab;
    };
    ckpt.token_vocab = read_vocab();
    ckpt.label_vocab = read_vocab();
    ckpt.params = ParamStore::deserialize(reader.str());
    return ckpt;
}

// ---- input construction ------------------------------------------------------

UnitSequenceInput build_input(const Chapter& chapter, const Vocab& tokens, const Vocab& labels,
                              const ModelConfig& config) {
    if (chapter.units.empty()) {
        throw DataError("build_input: chapter " + chapter.chapter_id + " has no units");
    }
    std::size_t total = 0;
    for (const Unit& unit : chapter.units) total += unit.size() + 2;
    if (total > config.max_position) {
        throw DataError("chapter " + chapter.chapter_id + ": sequence length " +
                        std::to_string(total) + " exceeds max_position " +
                        std::to_string(config.max_position) + "; truncate the chapter first");
    }

    UnitSequenceInput input;
    input.token_ids.reserve(total);
    input.spine_ids.reserve(total);
    input.segment_ids.reserve(total);
    const std::vector<int> sentinel_spine{Vocab::kCls};  // empty-spine sentinel

    for (std::size_t u = 0; u < chapter.units.size(); ++u) {
        const Unit& unit = chapter.units[u];
        int segment = static_cast<int>(u % 2);
        input.cls_positions.push_back(input.token_ids.size());
        input.token_ids.push_back(Vocab::kCls);
        input.spine_ids.push_back(sentinel_spine);
        input.segment_ids.push_back(segment);
        for (std::size_t t = 0; t < unit.size(); ++t) {
            input.token_ids.push_back(tokens.lookup(unit.tokens[t]));
            std::vector<int> spine;
            if (t < unit.spines.size() && !unit.spines[t].labels.empty()) {
                for (const std::string& label : unit.spines[t].labels) {
                    spine.push_back(labels.lookup(label));
                }
            } else {
                spine = sentinel_spine;
            }
            input.spine_ids.push_back(std::move(spine));
            input.segment_ids.push_back(segment);
        }
        input.token_ids.push_back(Vocab::kSep);
        input.spine_ids.push_back(sentinel_spine);
        input.segment_ids.push_back(segment);
    }
    return input;
}

// ---- graph construction ---------------------------------------------------------

Var ModelVars::at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw InternalError("unknown parameter var: " + name);
    return it->second;
}

ModelVars register_params(Graph& graph, const ParamStore& params) {
    ModelVars out;
    for (const auto& [name, tensor] : params.tensors()) {
        out.vars[name] = graph.leaf(tensor);
    }
    return out;
}

std::map<std::string, Tensor> collect_grads(const Graph& graph, const ModelVars& vars) {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, var] : vars.vars) grads[name] = graph.grad(var);
    return grads;
}

namespace {

// One bi-GRU direction over padded spine steps. All spines advance in
// lockstep; rows past their spine length hold their state.
Var gru_direction(Graph& graph, const ModelVars& vars, const char* dir,
                  const std::vector<std::vector<int>>& spines, std::size_t label_rows,
                  std::size_t hidden, bool reversed) {
    const std::size_t n = spines.size();
    std::size_t max_len = 0;
    for (const auto& spine : spines) {
        if (spine.empty()) throw DataError("encode_spines: empty spine");
        for (int id : spine) {
            if (id < 0 || static_cast<std::size_t>(id) >= label_rows) {
                throw DataError("encode_spines: unknown label id " + std::to_string(id));
            }
        }
        max_len = std::max(max_len, spine.size());
    }

    std::string p = std::string("gru.") + dir + ".";
    Var w_r = vars.at(p + "w_r"), w_z = vars.at(p + "w_z"), w_n = vars.at(p + "w_n");
    Var u_r = vars.at(p + "u_r"), u_z = vars.at(p + "u_z"), u_n = vars.at(p + "u_n");
    Var b_r = vars.at(p + "b_r"), b_z = vars.at(p + "b_z"), b_n = vars.at(p + "b_n");

    Var h = graph.leaf(Tensor(n, hidden));
    for (std::size_t t = 0; t < max_len; ++t) {
        std::vector<std::size_t> ids(n, 0);
        Tensor mask(n, 1);
        for (std::size_t r = 0; r < n; ++r) {
            const auto& spine = spines[r];
            if (t < spine.size()) {
                mask(r, 0) = 1.0;
                ids[r] = static_cast<std::size_t>(reversed ? spine[spine.size() - 1 - t]
                                                           : spine[t]);
            }
        }
        Var x = graph.gather_rows(vars.at("emb.label"), ids);
        Var r = graph.sigmoid(
            graph.add_rowwise(graph.add(graph.matmul(x, w_r), graph.matmul(h, u_r)), b_r));
        Var z = graph.sigmoid(
            graph.add_rowwise(graph.add(graph.matmul(x, w_z), graph.matmul(h, u_z)), b_z));
        Var cand = graph.tanh_op(graph.add_rowwise(
            graph.add(graph.matmul(x, w_n), graph.mul(r, graph.matmul(h, u_n))), b_n));
        // h' = (1-z).*cand + z.*h
        Var h_new = graph.add(cand, graph.mul(z, graph.sub(h, cand)));
        h = graph.lerp_rows(h_new, h, mask);
    }
    return h;
}

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
    Tensor pe(length, dim);
    for (std::size_t p = 0; p < length; ++p) {
        for (std::size_t c = 0; c < dim; ++c) {
            double exponent = static_cast<double>(c - (c % 2)) / static_cast<double>(dim);
            double angle = static_cast<double>(p) / std::pow(10000.0, exponent);
            pe(p, c) = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

// Sliding-window mask with global attention at CLS positions: position i may
// attend to j when |i-j| <= window, or either side is a CLS marker.
Tensor attention_mask(const UnitSequenceInput& input, std::size_t window) {
    const std::size_t n = input.length();
    std::vector<bool> is_cls(n, false);
    for (std::size_t p : input.cls_positions) is_cls[p] = true;
    Tensor mask(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo = i >= window ? i - window : 0;
        std::size_t hi = std::min(n - 1, i + window);
        for (std::size_t j = lo; j <= hi; ++j) mask(i, j) = 1.0;
        if (is_cls[i]) {
            for (std::size_t j = 0; j < n; ++j) mask(i, j) = 1.0;
        } else {
            for (std::size_t p : input.cls_positions) mask(i, p) = 1.0;
        }
    }
    return mask;
}

}  // namespace

Var encode_spines(Graph& graph, const ModelVars& vars,
                  const std::vector<std::vector<int>>& spines, const ModelConfig& config) {
    std::size_t label_rows = graph.value(vars.at("emb.label")).rows;
    Var fw = gru_direction(graph, vars, "fw", spines, label_rows, config.spine_gru_hidden, false);
    Var bw = gru_direction(graph, vars, "bw", spines, label_rows, config.spine_gru_hidden, true);
    return graph.concat_cols({fw, bw});
}

std::vector<double> encode_spine(const std::vector<int>& spine_label_ids,
                                 const ParamStore& params, const ModelConfig& config) {
    Graph graph;
    ModelVars vars = register_params(graph, params);
    Var enc = encode_spines(graph, vars, {spine_label_ids}, config);
    return graph.value(enc).data;
}

ForwardTrace scorer_forward(Graph& graph, const ModelVars& vars, const UnitSequenceInput& input,
                            const ModelConfig& config) {
    config.validate();
    const std::size_t n = input.length();
    const std::size_t d = config.model_dim;
    const std::size_t heads = config.num_heads;
    const std::size_t dh = d / heads;
    std::size_t token_rows = graph.value(vars.at("emb.token")).rows;
    if (n > config.max_position) {
        throw DataError("scorer_forward: sequence exceeds max_position; truncate first");
    }

    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        int id = input.token_ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= token_rows) {
            throw DataError("scorer_forward: token id out of range: " + std::to_string(id));
        }
        ids[i] = static_cast<std::size_t>(id);
    }

    ForwardTrace trace;
    Var tok = graph.gather_rows(vars.at("emb.token"), ids);
    Var spine = encode_spines(graph, vars, input.spine_ids, config);
    Var x = graph.add_rowwise(graph.matmul(graph.concat_cols({tok, spine}), vars.at("proj.w")),
                              vars.at("proj.b"));
    if (config.use_positions) {
        x = graph.add(x, graph.leaf(sinusoidal_positions(n, d)));
    }
    trace.hidden.push_back(x);

    Tensor mask = attention_mask(input, config.attention_window);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    for (std::size_t l = 0; l < config.num_layers; ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        Var q = graph.add_rowwise(graph.matmul(x, vars.at(p + "attn.wq")), vars.at(p + "attn.bq"));
        Var k = graph.matmul(x, vars.at(p + "attn.wk"));
        Var v = graph.add_rowwise(graph.matmul(x, vars.at(p + "attn.wv")), vars.at(p + "attn.bv"));

        std::vector<Var> head_outputs;
        head_outputs.reserve(heads);
        for (std::size_t hd = 0; hd < heads; ++hd) {
            Var qh = graph.slice_cols(q, hd * dh, (hd + 1) * dh);
            Var kh = graph.slice_cols(k, hd * dh, (hd + 1) * dh);
            Var vh = graph.slice_cols(v, hd * dh, (hd + 1) * dh);
            Var logits = graph.scale(graph.matmul_nt(qh, kh), inv_sqrt_dh);
            Var probs = graph.masked_softmax_rows(logits, mask);
            head_outputs.push_back(graph.matmul(probs, vh));
        }
        Var attn = graph.add_rowwise(
            graph.matmul(graph.concat_cols(head_outputs), vars.at(p + "attn.wo")),
            vars.at(p + "attn.bo"));
        x = graph.layer_norm_rows(graph.add(x, attn), vars.at(p + "ln1.gamma"),
                                  vars.at(p + "ln1.beta"));
        Var ff = graph.add_rowwise(
            graph.matmul(graph.gelu(graph.add_rowwise(graph.matmul(x, vars.at(p + "ff.w1")),
                                                      vars.at(p + "ff.b1"))),
                         vars.at(p + "ff.w2")),
            vars.at(p + "ff.b2"));
        x = graph.layer_norm_rows(graph.add(x, ff), vars.at(p + "ln2.gamma"),
                                  vars.at(p + "ln2.beta"));
        trace.hidden.push_back(x);
    }

    Var cls = graph.gather_rows(x, input.cls_positions);
    trace.logits = graph.add_rowwise(graph.matmul(cls, vars.at("head.w")), vars.at("head.b"));
    trace.scores = graph.sigmoid(trace.logits);
    return trace;
}

std::vector<double> score_chapter(const Chapter& chapter, const Checkpoint& checkpoint) {
    UnitSequenceInput input =
        build_input(chapter, checkpoint.token_vocab, checkpoint.label_vocab, checkpoint.config);
    Graph graph;
    ModelVars vars = register_params(graph, checkpoint.params);
    ForwardTrace trace = scorer_forward(graph, vars, input, checkpoint.config);
    return graph.value(trace.scores).data;
}

// ---- losses -----------------------------------------------------------------

BceResult bce_loss(const std::vector<double>& scores, const std::vector<double>& labels,
                   double eps) {
    if (scores.size() != labels.size()) {
        throw InternalError("bce_loss: score/label size mismatch");
    }
    if (scores.empty()) throw InternalError("bce_loss: empty input");
    BceResult result;
    result.grad.assign(scores.size(), 0.0);
    const double n = static_cast<double>(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double s = scores[i];
        bool clamp = s < eps || s > 1.0 - eps;
        if (clamp) {
            ++result.clamped;
            s = std::clamp(s, eps, 1.0 - eps);
        }
        result.loss -= (labels[i] * std::log(s) + (1.0 - labels[i]) * std::log(1.0 - s)) / n;
        if (!clamp) {
            result.grad[i] = (-(labels[i] / s) + (1.0 - labels[i]) / (1.0 - s)) / n;
        }
    }
    return result;
}

MarginRankResult margin_ranking_loss(const std::vector<double>& pos_scores,
                                     const std::vector<double>& neg_scores, double margin) {
    if (margin <= 0.0) throw ConfigError("margin must be positive");
    MarginRankResult result;
    result.grad_pos.assign(pos_scores.size(), 0.0);
    result.grad_neg.assign(neg_scores.size(), 0.0);
    if (pos_scores.empty() || neg_scores.empty()) return result;  // no pairs, zero loss

    const double pairs = static_cast<double>(pos_scores.size() * neg_scores.size());
    for (std::size_t i = 0; i < pos_scores.size(); ++i) {
        for (std::size_t j = 0; j < neg_scores.size(); ++j) {
            double h = margin - (pos_scores[i] - neg_scores[j]);
            if (h > 0.0) {
                result.loss += h / pairs;
                result.grad_pos[i] -= 1.0 / pairs;
                result.grad_neg[j] += 1.0 / pairs;
                ++result.active_pairs;
            }
        }
    }
    return result;
}

std::vector<std::pair<std::size_t, std::size_t>> build_pairs(const std::vector<bool>& labels,
                                                             std::size_t cap,
                                                             std::mt19937_64& rng) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (pos.empty() || neg.empty()) return pairs;

    if (pos.size() * neg.size() <= cap) {
        pairs.reserve(pos.size() * neg.size());
        for (std::size_t p : pos) {
            for (std::size_t n : neg) pairs.emplace_back(p, n);
        }
        return pairs;
    }
    pairs.reserve(cap);
    std::uniform_int_distribution<std::size_t> pick_pos(0, pos.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_neg(0, neg.size() - 1);
    for (std::size_t i = 0; i < cap; ++i) {
        pairs.emplace_back(pos[pick_pos(rng)], neg[pick_neg(rng)]);
    }
    return pairs;
}

// ---- optimizer ------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(ParamStore& params, double lr, double beta1, double beta2,
                             double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, tensor] : params.tensors()) {
        accum_[name] = Tensor(tensor.rows, tensor.cols);
        m_[name] = Tensor(tensor.rows, tensor.cols);
        v_[name] = Tensor(tensor.rows, tensor.cols);
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& [name, tensor] : accum_) {
        std::fill(tensor.data.begin(), tensor.data.end(), 0.0);
    }
}

void AdamOptimizer::accumulate(const std::map<std::string, Tensor>& grads, double weight) {
    for (const auto& [name, grad] : grads) {
        Tensor& acc = accum_.at(name);
        for (std::size_t i = 0; i < grad.size(); ++i) acc.data[i] += weight * grad.data[i];
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, theta] : params_.tensors()) {
        Tensor& g = accum_.at(name);
        Tensor& m = m_.at(name);
        Tensor& v = v_.at(name);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g.data[i];
            v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g.data[i] * g.data[i];
            theta.data[i] -=
                lr_ * (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + eps_);
        }
    }
}

// ---- gradient checking ----------------------------------------------------------

GradCheckResult grad_check(
    ParamStore& params,
    const std::function<double(const ParamStore&, std::map<std::string, Tensor>*)>& eval,
    double epsilon, std::size_t samples_per_tensor, std::uint64_t seed) {
    std::map<std::string, Tensor> analytic;
    eval(params, &analytic);

    GradCheckResult result;
    std::mt19937_64 rng(seed);
    for (auto& [name, tensor] : params.tensors()) {
        std::vector<std::size_t> coords(tensor.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (coords.size() > samples_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(samples_per_tensor);
        }
        for (std::size_t c : coords) {
            double original = tensor.data[c];
            tensor.data[c] = original + epsilon;
            double up = eval(params, nullptr);
            tensor.data[c] = original - epsilon;
            double down = eval(params, nullptr);
            tensor.data[c] = original;

            double fd = (up - down) / (2.0 * epsilon);
            double an = analytic.at(name).data[c];
            double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-2});
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = name;
            }
        }
    }
    return result;
}

double ranking_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw InternalError("ranking_auc: size mismatch");
    std::size_t pos = 0;
    for (bool b : labels) pos += b;
    std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) return 0.5;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over ties, then the Mann-Whitney statistic.
    std::vector<double> rank(scores.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k]) pos_rank_sum += rank[k];
    }
    double p = static_cast<double>(pos);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

}  // namespace spinsum
