#include "tprl/agent.hpp"

#include <cmath>

#include "tprl/error.hpp"
#include "tprl/matrix.hpp"

namespace tprl {

AgentParams AgentParams::init(const AgentConfig& cfg, std::uint64_t seed) {
    if (cfg.heads == 0 || cfg.d_model % cfg.heads != 0) {
        throw ConfigError("agent: heads must divide d_model");
    }
    Rng rng(mix_seed(seed, 0x4147454e54ULL));
    AgentParams p;
    p.cfg = cfg;
    p.proj_token = Affine::init("proj_token", cfg.d_l, cfg.d_model, rng, /*with_bias=*/false);
    // Query row input is [query, log(k)]; the survivor count tells the heads how
    // deep into the pruning schedule the state is.
    p.proj_query = Affine::init("proj_query", cfg.d_q + 1, cfg.d_model, rng, /*with_bias=*/false);
    p.attn = AttentionBlock::init("attn", cfg.d_model, cfg.heads, rng);
    p.pol_fc1 = Affine::init("pol_fc1", cfg.d_model, cfg.d_ff, rng);
    p.pol_fc2 = Affine::init("pol_fc2", cfg.d_ff, cfg.d_model, rng);
    p.pol_ln = LayerNorm::init("pol_ln", cfg.d_model);
    p.pol_out = Affine::init("pol_out", cfg.d_model, 1, rng);
    p.val_fc1 = Affine::init("val_fc1", cfg.d_model, cfg.d_ff, rng);
    p.val_fc2 = Affine::init("val_fc2", cfg.d_ff, cfg.d_model, rng);
    p.val_ln = LayerNorm::init("val_ln", cfg.d_model);
    p.val_out = Affine::init("val_out", cfg.d_model, 1, rng);
    return p;
}

std::vector<Parameter*> AgentParams::params() {
    std::vector<Parameter*> out = policy_params();
    for (Parameter* p : val_fc1.params()) out.push_back(p);
    for (Parameter* p : val_fc2.params()) out.push_back(p);
    for (Parameter* p : val_ln.params()) out.push_back(p);
    for (Parameter* p : val_out.params()) out.push_back(p);
    return out;
}

std::vector<Parameter*> AgentParams::policy_params() {
    std::vector<Parameter*> out;
    for (Parameter* p : proj_token.params()) out.push_back(p);
    for (Parameter* p : proj_query.params()) out.push_back(p);
    for (Parameter* p : attn.params()) out.push_back(p);
    for (Parameter* p : pol_fc1.params()) out.push_back(p);
    for (Parameter* p : pol_fc2.params()) out.push_back(p);
    for (Parameter* p : pol_ln.params()) out.push_back(p);
    for (Parameter* p : pol_out.params()) out.push_back(p);
    return out;
}

AgentPass agent_forward(const AgentParams& params, const Matrix& codes,
                        const std::vector<double>& query, bool want_value) {
    const AgentConfig& cfg = params.cfg;
    if (codes.rows == 0) throw StateError("agent_forward: state has no tokens");
    if (codes.cols != cfg.d_l) throw DimensionError("agent_forward: code width does not match d_l");
    if (query.size() != cfg.d_q) throw DimensionError("agent_forward: query width does not match d_q");

    AgentPass pass;
    pass.k = codes.rows;

    // X = [projected tokens; projected query], query row last. The query row
    // carries log(k) so the survivor count is visible through attention.
    Matrix q_row(1, cfg.d_q + 1);
    std::copy(query.begin(), query.end(), q_row.row(0));
    q_row.at(0, cfg.d_q) = std::log(static_cast<double>(pass.k));
    Matrix tok_proj = params.proj_token.forward(codes, pass.tok_c);
    Matrix qry_proj = params.proj_query.forward(q_row, pass.qry_c);
    pass.x = Matrix(pass.k + 1, cfg.d_model);
    for (std::size_t i = 0; i < pass.k; ++i) {
        std::copy(tok_proj.row(i), tok_proj.row(i) + cfg.d_model, pass.x.row(i));
    }
    std::copy(qry_proj.row(0), qry_proj.row(0) + cfg.d_model, pass.x.row(pass.k));

    pass.f = cfg.mlp_only ? pass.x : params.attn.forward(pass.x, pass.attn_c);

    pass.f_tokens = Matrix(pass.k, cfg.d_model);
    for (std::size_t i = 0; i < pass.k; ++i) {
        std::copy(pass.f.row(i), pass.f.row(i) + cfg.d_model, pass.f_tokens.row(i));
    }

    // Policy head: g = LayerNorm(f + W2 gelu(W1 f + b1) + b2), p = sigmoid(w.g + b).
    pass.p_hidden_pre = params.pol_fc1.forward(pass.f_tokens, pass.p1_c);
    Matrix hidden = gelu(pass.p_hidden_pre);
    Matrix mlp_out = params.pol_fc2.forward(hidden, pass.p2_c);
    add_in_place(mlp_out, pass.f_tokens);
    Matrix g = params.pol_ln.forward(mlp_out, pass.pln_c);
    Matrix logit_col = params.pol_out.forward(g, pass.pout_c);
    pass.logits.resize(pass.k);
    pass.probs.resize(pass.k);
    for (std::size_t i = 0; i < pass.k; ++i) {
        pass.logits[i] = logit_col.at(i, 0);
        pass.probs[i] = sigmoid_scalar(pass.logits[i]);
    }

    if (want_value) {
        pass.has_value = true;
        // Mean pool over token rows only; the query row is excluded.
        pass.fbar = Matrix(1, cfg.d_model, 0.0);
        const double inv_k = 1.0 / static_cast<double>(pass.k);
        for (std::size_t i = 0; i < pass.k; ++i) {
            const double* fr = pass.f_tokens.row(i);
            double* br = pass.fbar.row(0);
            for (std::size_t j = 0; j < cfg.d_model; ++j) br[j] += fr[j] * inv_k;
        }
        pass.v_hidden_pre = params.val_fc1.forward(pass.fbar, pass.v1_c);
        Matrix vh = gelu(pass.v_hidden_pre);
        Matrix vm = params.val_fc2.forward(vh, pass.v2_c);
        add_in_place(vm, pass.fbar);
        Matrix vg = params.val_ln.forward(vm, pass.vln_c);
        Matrix v = params.val_out.forward(vg, pass.vout_c);
        pass.value = v.at(0, 0);
    }
    return pass;
}

void agent_backward(AgentParams& params, AgentPass& pass, const std::vector<double>& dlogits,
                    double dvalue) {
    const AgentConfig& cfg = params.cfg;
    if (dlogits.size() != pass.k) {
        throw DimensionError("agent_backward: dlogits length does not match token count");
    }

    // Policy head backward.
    Matrix d_logit_col(pass.k, 1);
    for (std::size_t i = 0; i < pass.k; ++i) d_logit_col.at(i, 0) = dlogits[i];
    Matrix d_g = params.pol_out.backward(d_logit_col, pass.pout_c);
    Matrix d_resid = params.pol_ln.backward(d_g, pass.pln_c);
    Matrix d_f_tokens = d_resid;  // residual branch
    Matrix d_hidden = params.pol_fc2.backward(d_resid, pass.p2_c);
    d_hidden = gelu_backward(pass.p_hidden_pre, d_hidden);
    add_in_place(d_f_tokens, params.pol_fc1.backward(d_hidden, pass.p1_c));

    // Value head backward into the pooled token rows.
    if (dvalue != 0.0) {
        if (!pass.has_value) throw StateError("agent_backward: value gradient without value forward");
        Matrix dv(1, 1);
        dv.at(0, 0) = dvalue;
        Matrix d_vg = params.val_out.backward(dv, pass.vout_c);
        Matrix d_vres = params.val_ln.backward(d_vg, pass.vln_c);
        Matrix d_fbar = d_vres;
        Matrix d_vh = params.val_fc2.backward(d_vres, pass.v2_c);
        d_vh = gelu_backward(pass.v_hidden_pre, d_vh);
        add_in_place(d_fbar, params.val_fc1.backward(d_vh, pass.v1_c));
        const double inv_k = 1.0 / static_cast<double>(pass.k);
        for (std::size_t i = 0; i < pass.k; ++i) {
            double* dr = d_f_tokens.row(i);
            const double* br = d_fbar.row(0);
            for (std::size_t j = 0; j < cfg.d_model; ++j) dr[j] += br[j] * inv_k;
        }
    }

    // Assemble dF with a zero query row; heads never read f_q directly.
    Matrix d_f(pass.k + 1, cfg.d_model, 0.0);
    for (std::size_t i = 0; i < pass.k; ++i) {
        std::copy(d_f_tokens.row(i), d_f_tokens.row(i) + cfg.d_model, d_f.row(i));
    }

    Matrix d_x = cfg.mlp_only ? d_f : params.attn.backward(d_f, pass.attn_c);

    Matrix d_tok(pass.k, cfg.d_model);
    for (std::size_t i = 0; i < pass.k; ++i) {
        std::copy(d_x.row(i), d_x.row(i) + cfg.d_model, d_tok.row(i));
    }
    Matrix d_qry(1, cfg.d_model);
    std::copy(d_x.row(pass.k), d_x.row(pass.k) + cfg.d_model, d_qry.row(0));
    (void)params.proj_token.backward(d_tok, pass.tok_c);
    (void)params.proj_query.backward(d_qry, pass.qry_c);
}

std::vector<double> policy_probs(const AgentParams& params, const Matrix& codes,
                                 const std::vector<double>& query) {
    return agent_forward(params, codes, query, /*want_value=*/false).probs;
}

double value_estimate(const AgentParams& params, const Matrix& codes,
                      const std::vector<double>& query) {
    return agent_forward(params, codes, query, /*want_value=*/true).value;
}

std::vector<double> discounted_probs(const std::vector<double>& probs, std::uint32_t step,
                                     double lambda_disc) {
    const double disc = std::pow(lambda_disc, static_cast<double>(step));
    std::vector<double> q(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) q[i] = disc * probs[i];
    return q;
}

double joint_log_prob(const std::vector<double>& q, const std::vector<std::uint8_t>& bits) {
    if (q.size() != bits.size()) throw DimensionError("joint_log_prob: length mismatch");
    double lp = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double qc = clamp_prob(q[i]);
        lp += bits[i] ? std::log(qc) : std::log(1.0 - qc);
    }
    return lp;
}

std::vector<double> joint_log_prob_grad_q(const std::vector<double>& q,
                                          const std::vector<std::uint8_t>& bits) {
    std::vector<double> dq(q.size(), 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (clamp_active(q[i])) continue;
        dq[i] = bits[i] ? 1.0 / q[i] : -1.0 / (1.0 - q[i]);
    }
    return dq;
}

double entropy_sum(const std::vector<double>& q) {
    double h = 0.0;
    for (double qi : q) {
        const double qc = clamp_prob(qi);
        h -= qc * std::log(qc) + (1.0 - qc) * std::log(1.0 - qc);
    }
    return h;
}

std::vector<double> entropy_grad_q(const std::vector<double>& q) {
    std::vector<double> dq(q.size(), 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (clamp_active(q[i])) continue;
        dq[i] = std::log((1.0 - q[i]) / q[i]);
    }
    return dq;
}

double StreamActionRng::draw(std::size_t slot) const {
    return stream_uniform(base, (*index_map)[slot], step);
}

ActionSample sample_actions(const std::vector<double>& probs, std::uint32_t step,
                            double lambda_disc, const ActionRng& rng) {
    ActionSample out;
    const std::vector<double> q = discounted_probs(probs, step, lambda_disc);
    out.bits.resize(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        out.bits[i] = rng.draw(i) < q[i] ? 1 : 0;
    }
    out.log_prob = joint_log_prob(q, out.bits);
    return out;
}

std::vector<std::uint8_t> deterministic_mask(const std::vector<double>& probs, double tau) {
    std::vector<std::uint8_t> bits(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) bits[i] = probs[i] > tau ? 1 : 0;
    return bits;
}

}  // namespace tprl
