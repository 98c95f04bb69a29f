#include "tprl/model_io.hpp"

#include <cmath>

#include "tprl/error.hpp"

namespace tprl {

namespace {

void put(CheckpointSection& sec, const std::string& name, const Matrix& value) {
    sec.tensors.push_back({name, value});
}

// Copies a stored tensor into a live parameter; the shape must agree with
// what the architecture derived from the meta tensors.
void copy_into(Parameter& p, const CheckpointSection& sec, const std::string& name) {
    const Matrix& m = sec.require(name);
    if (m.rows != p.value.rows || m.cols != p.value.cols) {
        throw IoError("checkpoint tensor '" + name + "' has shape " + std::to_string(m.rows) +
                      "x" + std::to_string(m.cols) + ", expected " +
                      std::to_string(p.value.rows) + "x" + std::to_string(p.value.cols));
    }
    p.value = m;
    p.zero_grad();
}

std::size_t meta_count(const Matrix& meta, std::size_t slot, const std::string& what) {
    const double v = meta.data[slot];
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e9) {
        throw IoError("checkpoint meta value for " + what + " is not a valid count");
    }
    return static_cast<std::size_t>(v);
}

}  // namespace

Checkpoint autoencoder_checkpoint(const AutoencoderParams& ae) {
    CheckpointSection sec;
    sec.name = "autoencoder";
    put(sec, "enc1.w", ae.enc1.w.value);
    put(sec, "enc1.b", ae.enc1.b.value);
    put(sec, "enc_ln.gain", ae.enc_ln.gain.value);
    put(sec, "enc_ln.shift", ae.enc_ln.shift.value);
    put(sec, "enc2.w", ae.enc2.w.value);
    put(sec, "enc2.b", ae.enc2.b.value);
    put(sec, "dec1.w", ae.dec1.w.value);
    put(sec, "dec1.b", ae.dec1.b.value);
    put(sec, "dec_ln.gain", ae.dec_ln.gain.value);
    put(sec, "dec_ln.shift", ae.dec_ln.shift.value);
    put(sec, "dec2.w", ae.dec2.w.value);
    put(sec, "dec2.b", ae.dec2.b.value);
    Matrix frozen(1, 1);
    frozen.at(0, 0) = ae.frozen ? 1.0 : 0.0;
    put(sec, "frozen", frozen);

    Checkpoint ck;
    ck.sections.push_back(std::move(sec));
    return ck;
}

AutoencoderParams autoencoder_from_checkpoint(const Checkpoint& ck) {
    const CheckpointSection& sec = ck.require_section("autoencoder");
    const Matrix& enc1_w = sec.require("enc1.w");
    const Matrix& enc2_w = sec.require("enc2.w");

    AutoencoderConfig cfg;
    cfg.d_v = enc1_w.rows;
    cfg.d_hidden = enc1_w.cols;
    cfg.d_l = enc2_w.cols;
    if (cfg.d_v == 0 || cfg.d_hidden == 0 || cfg.d_l == 0) {
        throw IoError("checkpoint autoencoder tensors describe an empty architecture");
    }

    AutoencoderParams ae = AutoencoderParams::init(cfg, 0);
    copy_into(ae.enc1.w, sec, "enc1.w");
    copy_into(ae.enc1.b, sec, "enc1.b");
    copy_into(ae.enc_ln.gain, sec, "enc_ln.gain");
    copy_into(ae.enc_ln.shift, sec, "enc_ln.shift");
    copy_into(ae.enc2.w, sec, "enc2.w");
    copy_into(ae.enc2.b, sec, "enc2.b");
    copy_into(ae.dec1.w, sec, "dec1.w");
    copy_into(ae.dec1.b, sec, "dec1.b");
    copy_into(ae.dec_ln.gain, sec, "dec_ln.gain");
    copy_into(ae.dec_ln.shift, sec, "dec_ln.shift");
    copy_into(ae.dec2.w, sec, "dec2.w");
    copy_into(ae.dec2.b, sec, "dec2.b");
    ae.frozen = sec.require("frozen").data[0] != 0.0;
    return ae;
}

void save_autoencoder(const std::filesystem::path& path, const AutoencoderParams& ae) {
    save_checkpoint(path, autoencoder_checkpoint(ae));
}

AutoencoderParams load_autoencoder(const std::filesystem::path& path) {
    return autoencoder_from_checkpoint(load_checkpoint(path));
}

Checkpoint agent_checkpoint(const AgentParams& agent) {
    CheckpointSection pol;
    pol.name = "policy";
    Matrix meta(1, 2);
    meta.at(0, 0) = static_cast<double>(agent.cfg.heads);
    meta.at(0, 1) = agent.cfg.mlp_only ? 1.0 : 0.0;
    put(pol, "meta", meta);
    put(pol, "proj_token.w", agent.proj_token.w.value);
    put(pol, "proj_query.w", agent.proj_query.w.value);
    put(pol, "attn.w_q", agent.attn.w_q.value);
    put(pol, "attn.w_k", agent.attn.w_k.value);
    put(pol, "attn.w_v", agent.attn.w_v.value);
    put(pol, "attn.w_o", agent.attn.w_o.value);
    put(pol, "attn.ln.gain", agent.attn.ln.gain.value);
    put(pol, "attn.ln.shift", agent.attn.ln.shift.value);
    put(pol, "pol_fc1.w", agent.pol_fc1.w.value);
    put(pol, "pol_fc1.b", agent.pol_fc1.b.value);
    put(pol, "pol_fc2.w", agent.pol_fc2.w.value);
    put(pol, "pol_fc2.b", agent.pol_fc2.b.value);
    put(pol, "pol_ln.gain", agent.pol_ln.gain.value);
    put(pol, "pol_ln.shift", agent.pol_ln.shift.value);
    put(pol, "pol_out.w", agent.pol_out.w.value);
    put(pol, "pol_out.b", agent.pol_out.b.value);

    CheckpointSection val;
    val.name = "value";
    put(val, "val_fc1.w", agent.val_fc1.w.value);
    put(val, "val_fc1.b", agent.val_fc1.b.value);
    put(val, "val_fc2.w", agent.val_fc2.w.value);
    put(val, "val_fc2.b", agent.val_fc2.b.value);
    put(val, "val_ln.gain", agent.val_ln.gain.value);
    put(val, "val_ln.shift", agent.val_ln.shift.value);
    put(val, "val_out.w", agent.val_out.w.value);
    put(val, "val_out.b", agent.val_out.b.value);

    Checkpoint ck;
    ck.sections.push_back(std::move(pol));
    ck.sections.push_back(std::move(val));
    return ck;
}

AgentParams agent_from_checkpoint(const Checkpoint& ck) {
    const CheckpointSection& pol = ck.require_section("policy");
    const CheckpointSection& val = ck.require_section("value");

    const Matrix& meta = pol.require("meta");
    if (meta.size() != 2) throw IoError("checkpoint policy meta tensor must hold 2 values");
    const Matrix& proj_token_w = pol.require("proj_token.w");
    const Matrix& proj_query_w = pol.require("proj_query.w");
    const Matrix& pol_fc1_w = pol.require("pol_fc1.w");

    AgentConfig cfg;
    cfg.d_l = proj_token_w.rows;
    // proj_query consumes [query, log(k)], so its input width is d_q + 1.
    cfg.d_q = proj_query_w.rows > 0 ? proj_query_w.rows - 1 : 0;
    cfg.d_model = proj_token_w.cols;
    cfg.heads = meta_count(meta, 0, "attention heads");
    cfg.d_ff = pol_fc1_w.cols;
    cfg.mlp_only = meta.data[1] != 0.0;
    if (cfg.d_l == 0 || cfg.d_q == 0 || cfg.d_model == 0 || cfg.d_ff == 0) {
        throw IoError("checkpoint policy tensors describe an empty architecture");
    }
    if (cfg.heads == 0 || cfg.d_model % cfg.heads != 0) {
        throw IoError("checkpoint policy meta heads do not divide the model width");
    }

    AgentParams agent = AgentParams::init(cfg, 0);
    copy_into(agent.proj_token.w, pol, "proj_token.w");
    copy_into(agent.proj_query.w, pol, "proj_query.w");
    copy_into(agent.attn.w_q, pol, "attn.w_q");
    copy_into(agent.attn.w_k, pol, "attn.w_k");
    copy_into(agent.attn.w_v, pol, "attn.w_v");
    copy_into(agent.attn.w_o, pol, "attn.w_o");
    copy_into(agent.attn.ln.gain, pol, "attn.ln.gain");
    copy_into(agent.attn.ln.shift, pol, "attn.ln.shift");
    copy_into(agent.pol_fc1.w, pol, "pol_fc1.w");
    copy_into(agent.pol_fc1.b, pol, "pol_fc1.b");
    copy_into(agent.pol_fc2.w, pol, "pol_fc2.w");
    copy_into(agent.pol_fc2.b, pol, "pol_fc2.b");
    copy_into(agent.pol_ln.gain, pol, "pol_ln.gain");
    copy_into(agent.pol_ln.shift, pol, "pol_ln.shift");
    copy_into(agent.pol_out.w, pol, "pol_out.w");
    copy_into(agent.pol_out.b, pol, "pol_out.b");

    copy_into(agent.val_fc1.w, val, "val_fc1.w");
    copy_into(agent.val_fc1.b, val, "val_fc1.b");
    copy_into(agent.val_fc2.w, val, "val_fc2.w");
    copy_into(agent.val_fc2.b, val, "val_fc2.b");
    copy_into(agent.val_ln.gain, val, "val_ln.gain");
    copy_into(agent.val_ln.shift, val, "val_ln.shift");
    copy_into(agent.val_out.w, val, "val_out.w");
    copy_into(agent.val_out.b, val, "val_out.b");
    return agent;
}

void save_agent(const std::filesystem::path& path, const AgentParams& agent) {
    save_checkpoint(path, agent_checkpoint(agent));
}

AgentParams load_agent(const std::filesystem::path& path) {
    return agent_from_checkpoint(load_checkpoint(path));
}

}  // namespace tprl
