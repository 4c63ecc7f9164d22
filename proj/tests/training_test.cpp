#include <doctest.h>

#include <cmath>

#include "spotkit/corpus.hpp"
#include "spotkit/text_spans.hpp"
#include "spotkit/training.hpp"

using namespace spot;
using namespace spot::train;

namespace {

model::BackboneConfig tiny_config(std::uint64_t seed = 3) {
    model::BackboneConfig cfg;
    cfg.d = 16;
    cfg.n_heads = 2;
    cfg.n_blocks = 2;
    cfg.d_ff = 32;
    cfg.max_seq = 256;
    cfg.init_seed = seed;
    return cfg;
}

std::vector<data::SpanDropInstance> tiny_instances(std::size_t n_traces, double drop_p,
                                                   std::uint64_t seed) {
    corpus::CorpusConfig cc;
    cc.size = n_traces;
    cc.min_steps = 3;
    cc.max_steps = 4;
    cc.seed = seed;
    const auto traces = corpus::generate_corpus(cc);
    std::vector<data::SpanDropInstance> out;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto region = spans::extract_reasoning_region(traces[i].reasoning);
        const auto span_list = spans::segment_spans(region.body);
        data::DropConfig dc;
        dc.drop_probability = drop_p;
        dc.rng_seed = seed + i + 1;
        out.push_back(data::build_spandrop(traces[i], data::sample_drop_set(span_list.size(), dc)));
    }
    return out;
}

Matrix random_logits(int v, int t, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(v, t);
    for (int j = 0; j < t; ++j) {
        for (int i = 0; i < v; ++i) m(i, j) = rng.normal();
    }
    return m;
}

}  // namespace

TEST_CASE("masked_ce_loss: full mask, empty mask, and pause invariance") {
    const int pause = 0;
    const Matrix logits = random_logits(6, 4, 11);

    const std::vector<int> pauses = {0, 0, 0, 0};
    const auto all_pause =
        masked_ce_loss(logits, pauses, pause_mask_from_targets(pauses, pause));
    CHECK(all_pause.loss == 0.0);
    CHECK(all_pause.all_pause);
    CHECK(all_pause.valid_positions == 0);

    // No pauses: equals the standard mean cross-entropy.
    const std::vector<int> targets = {1, 2, 3, 4};
    const auto plain = masked_ce_loss(logits, targets, pause_mask_from_targets(targets, pause));
    double expect = 0.0;
    for (int t = 0; t < 4; ++t) {
        const Vector p = head::softmax(logits.col(t));
        expect += -std::log(p[targets[static_cast<std::size_t>(t)]]);
    }
    expect /= 4.0;
    CHECK(plain.loss == doctest::Approx(expect).epsilon(1e-12));
    CHECK_FALSE(plain.all_pause);

    // Flipping the target at a pause position leaves the loss unchanged:
    // the mask hides that slot, so its target is never read.
    const std::vector<int> with_pause = {1, 0, 3, 4};
    const auto mask = pause_mask_from_targets(with_pause, pause);
    std::vector<int> mutated = with_pause;
    mutated[1] = 5;
    const auto l1 = masked_ce_loss(logits, with_pause, mask);
    const auto l2 = masked_ce_loss(logits, mutated, mask);
    CHECK(l1.loss == l2.loss);
    CHECK(l1.valid_positions == 3);
}

TEST_CASE("masked_ce_grad: zero at pause targets, softmax-minus-onehot elsewhere") {
    const int pause = 0;
    const Matrix logits = random_logits(5, 3, 13);
    const std::vector<int> targets = {2, 0, 4};
    const auto mask = pause_mask_from_targets(targets, pause);
    const Matrix g = masked_ce_grad(logits, targets, mask, 2);
    CHECK(g.col(1).norm() == 0.0);
    const Vector p0 = head::softmax(logits.col(0));
    CHECK(g(2, 0) == doctest::Approx((p0[2] - 1.0) / 2.0).epsilon(1e-12));
    CHECK(g(1, 0) == doctest::Approx(p0[1] / 2.0).epsilon(1e-12));

    // Finite-difference check of the pooled CE against the gradient.
    const double h = 1e-6;
    auto pooled_ce = [&](const Matrix& l) {
        const auto r = masked_ce_loss(l, targets, mask);
        return r.loss * r.valid_positions / 2.0;
    };
    for (int i = 0; i < 5; ++i) {
        Matrix up = logits, down = logits;
        up(i, 2) += h;
        down(i, 2) -= h;
        const double fd = (pooled_ce(up) - pooled_ce(down)) / (2 * h);
        CHECK(fd == doctest::Approx(g(i, 2)).epsilon(1e-4));
    }
}

TEST_CASE("span_align_single: zero-cost coupling gives pure entropy value") {
    model::Backbone m(tiny_config(), model::ToyTokenizer::with_default_lexicon());
    const head::HeadWeights head = m.head_view();
    ot::SinkhornParams params;
    Rng rng(5);
    Vector state(16);
    for (int i = 0; i < 16; ++i) state[i] = rng.normal();
    Matrix teacher(16, 1);
    teacher.col(0) = state;
    const auto res = span_align_single(state, teacher, head, params, true);
    CHECK(res.value == doctest::Approx(res.epsilon_final).epsilon(1e-9));
    CHECK(res.d_pause_state.size() == 16);
}

TEST_CASE("span_align_single: value equals one-to-set oracle on the cost row") {
    model::Backbone m(tiny_config(9), model::ToyTokenizer::with_default_lexicon());
    const head::HeadWeights head = m.head_view();
    ot::SinkhornParams params;
    Rng rng(17);
    for (bool normalize : {true, false}) {
        Vector z(16);
        for (int i = 0; i < 16; ++i) z[i] = rng.normal();
        const int k = 5;
        Matrix teacher(16, k);
        for (int j = 0; j < k; ++j) {
            for (int i = 0; i < 16; ++i) teacher(i, j) = rng.normal();
        }
        const auto res = span_align_single(z, teacher, head, params, normalize);

        // Rebuild the cost row via the public head operations.
        Vector zt = head::soft_embed(z, head);
        if (normalize) zt /= (zt.norm() + params.delta);
        Vector costs(k);
        for (int j = 0; j < k; ++j) {
            Vector ht = head::soft_embed(teacher.col(j), head);
            if (normalize) ht /= (ht.norm() + params.delta);
            costs[j] = (zt - ht).squaredNorm();
        }
        const double oracle = ot::one_to_set_value(costs, Vector::Constant(k, 1.0 / k),
                                                   res.epsilon_final);
        CHECK(res.value == doctest::Approx(oracle).epsilon(1e-8));
    }
}

TEST_CASE("span_align_single: gradient matches central finite differences") {
    model::Backbone m(tiny_config(21), model::ToyTokenizer::with_default_lexicon());
    const head::HeadWeights head = m.head_view();
    ot::SinkhornParams params;
    Rng rng(23);
    for (int trial = 0; trial < 4; ++trial) {
        const bool normalize = trial % 2 == 0;
        Vector z(16);
        for (int i = 0; i < 16; ++i) z[i] = rng.normal();
        const int k = 1 + static_cast<int>(rng.below(6));
        Matrix teacher(16, k);
        for (int j = 0; j < k; ++j) {
            for (int i = 0; i < 16; ++i) teacher(i, j) = rng.normal();
        }
        const auto res = span_align_single(z, teacher, head, params, normalize);
        const double h = 1e-4;
        for (int i = 0; i < 16; i += 3) {
            Vector up = z, down = z;
            up[i] += h;
            down[i] -= h;
            const double fu = span_align_single(up, teacher, head, params, normalize).value;
            const double fd = span_align_single(down, teacher, head, params, normalize).value;
            const double numeric = (fu - fd) / (2 * h);
            const double analytic = res.d_pause_state[i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            CHECK(std::abs(numeric - analytic) / denom < 1e-3);
        }
    }
}

TEST_CASE("span_align_loss: zero dropped spans returns 0") {
    model::Backbone m(tiny_config(31), model::ToyTokenizer::with_default_lexicon());
    const auto teacher = model::clone_frozen_teacher(m);
    const auto instances = tiny_instances(2, 0.0, 71);
    ot::SinkhornParams params;
    CHECK(span_align_loss(instances, m, teacher, params, true, 256) == 0.0);
}

TEST_CASE("encode_instance: pause positions and teacher span ranges line up") {
    const auto tk = model::ToyTokenizer::with_default_lexicon();
    const auto instances = tiny_instances(6, 0.5, 41);
    for (const auto& inst : instances) {
        const auto enc = encode_instance(inst, tk);
        CHECK(enc.pause_positions.size() == inst.pairings.size());
        for (const auto pos : enc.pause_positions) {
            CHECK(enc.tokens[pos] == tk.pause_id());
        }
        // Teacher token ranges decode back to the dropped span text.
        const auto region = spans::extract_reasoning_region(inst.reasoning);
        for (std::size_t r = 0; r < inst.pairings.size(); ++r) {
            const auto [tb, te] = enc.teacher_span_ranges[r];
            REQUIRE(tb < te);
            std::vector<int> span_tokens(enc.teacher_tokens.begin() + static_cast<long>(tb),
                                         enc.teacher_tokens.begin() + static_cast<long>(te));
            const std::string decoded = tk.decode(span_tokens);
            const std::string expected = region.body.substr(
                inst.pairings[r].begin, inst.pairings[r].end - inst.pairings[r].begin);
            CHECK(decoded == expected);
        }
    }
}

TEST_CASE("stage1_train: deterministic and lambda=0 logs align without using it") {
    const auto instances = tiny_instances(3, 0.5, 51);
    StageOneConfig cfg;
    cfg.epochs = 1;
    cfg.pretrain_epochs = 0;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.05;
    cfg.seed = 1;
    cfg.lambda = 0.0;

    model::Backbone a(tiny_config(61), model::ToyTokenizer::with_default_lexicon());
    model::Backbone b = a;
    const auto teacher = model::clone_frozen_teacher(a);

    auto r0 = stage1_train(a, teacher, instances, cfg);
    CHECK(r0.metrics.front().align > 0.0);

    auto r1 = stage1_train(b, teacher, instances, cfg);
    CHECK(a.tensor_checksum("block0.Wq") == b.tensor_checksum("block0.Wq"));
    CHECK(a.tensor_checksum("lnf.g") == b.tensor_checksum("lnf.g"));
    CHECK(r0.metrics.front().ce == r1.metrics.front().ce);
}

TEST_CASE("stage1_train: lambda=0 parameter trajectory is independent of alignment") {
    // With lambda=0 the alignment term must contribute nothing to updates:
    // doubling every teacher state (which changes align values drastically)
    // must leave the trained parameters identical.
    const auto instances = tiny_instances(2, 0.6, 53);
    StageOneConfig cfg;
    cfg.epochs = 1;
    cfg.pretrain_epochs = 0;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.05;
    cfg.seed = 5;
    cfg.lambda = 0.0;

    model::Backbone a(tiny_config(63), model::ToyTokenizer::with_default_lexicon());
    model::Backbone b = a;
    const auto teacher1 = model::clone_frozen_teacher(a);
    model::Backbone teacher_mod = a;
    teacher_mod.params().E.array() *= 2.0;  // different frozen head -> different align values
    const auto teacher2 = model::clone_frozen_teacher(teacher_mod);

    const auto ra = stage1_train(a, teacher1, instances, cfg);
    const auto rb = stage1_train(b, teacher2, instances, cfg);
    CHECK(ra.metrics.front().align != rb.metrics.front().align);
    CHECK(a.tensor_checksum("block0.Wq") == b.tensor_checksum("block0.Wq"));
    CHECK(a.tensor_checksum("block1.W2") == b.tensor_checksum("block1.W2"));
}

TEST_CASE("stage1_train: frozen tensors are bitwise invariant") {
    const auto instances = tiny_instances(4, 0.5, 81);
    StageOneConfig cfg;
    cfg.epochs = 2;
    cfg.pretrain_epochs = 0;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.05;
    cfg.seed = 2;

    model::Backbone student(tiny_config(91), model::ToyTokenizer::with_default_lexicon());
    const auto teacher = model::clone_frozen_teacher(student);
    const auto w_sum = student.tensor_checksum("head.W");
    const auto b_sum = student.tensor_checksum("head.b");
    const auto e_sum = student.tensor_checksum("E");
    const auto block_sum = student.tensor_checksum("block0.Wq");

    stage1_train(student, teacher, instances, cfg);
    CHECK(student.tensor_checksum("head.W") == w_sum);
    CHECK(student.tensor_checksum("head.b") == b_sum);
    CHECK(student.tensor_checksum("E") == e_sum);
    CHECK(student.tensor_checksum("block0.Wq") != block_sum);
}

TEST_CASE("stage1 loss additivity: total equals CE + lambda * align") {
    const auto instances = tiny_instances(1, 0.6, 99);
    REQUIRE(!instances[0].pairings.empty());
    const auto tk = model::ToyTokenizer::with_default_lexicon();
    model::Backbone student(tiny_config(101), tk);
    const auto teacher = model::clone_frozen_teacher(student);
    ot::SinkhornParams params;

    const auto enc = encode_instance(instances[0], tk);
    const Matrix hidden = student.forward_hidden(enc.tokens);
    const Matrix logits = student.logits_from_hidden(hidden);
    const auto cb = static_cast<Eigen::Index>(enc.completion_begin);
    std::vector<int> targets(enc.tokens.begin() + cb, enc.tokens.end());
    const auto ce = masked_ce_loss(
        logits.middleCols(cb - 1, static_cast<Eigen::Index>(enc.tokens.size()) - cb), targets,
        pause_mask_from_targets(targets, tk.pause_id()));
    const double align = span_align_loss(instances, student, teacher, params, true, 256);
    CHECK(align > 0.0);
    CHECK(ce.loss > 0.0);

    // The combined stage-1 objective is exactly the sum of the two parts.
    StageOneConfig cfg;
    cfg.epochs = 1;
    cfg.pretrain_epochs = 0;
    cfg.batch_size = 1;
    cfg.learning_rate = 1e-9;  // keep parameters effectively unchanged
    cfg.seed = 3;
    cfg.lambda = 0.7;
    model::Backbone trained = student;
    const auto result = stage1_train(trained, teacher, instances, cfg);
    const auto& m0 = result.metrics.front();
    CHECK(m0.ce == doctest::Approx(ce.loss).epsilon(1e-9));
    CHECK(m0.align == doctest::Approx(align).epsilon(1e-9));
}

TEST_CASE("rft_score: direct formula") {
    CHECK(rft_score(60, 100) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(rft_score(100, 100) == 0.0);
    CHECK(rft_score(120, 100) == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK_THROWS_AS(rft_score(10, 0), Error);
}

TEST_CASE("rft_select: correctness filter, score max, tie rules, skip") {
    std::vector<RftCandidate> cands;
    auto add = [&](std::size_t len, bool correct) {
        RftCandidate c;
        c.pattern = "p" + std::to_string(cands.size());
        c.length = len;
        c.correct = correct;
        cands.push_back(c);
    };

    // Lengths {90 ok, 70 ok, 50 wrong}, ref 100 -> the length-70 candidate.
    add(90, true);
    add(70, true);
    add(50, false);
    auto sel = rft_select(cands, 100);
    CHECK_FALSE(sel.skipped);
    CHECK(sel.chosen_index == 1);
    CHECK(sel.score == doctest::Approx(0.3).epsilon(1e-12));

    cands.clear();
    add(10, false);
    add(20, false);
    sel = rft_select(cands, 100);
    CHECK(sel.skipped);

    // Single correct candidate wins regardless of score sign.
    cands.clear();
    add(150, true);
    sel = rft_select(cands, 100);
    CHECK_FALSE(sel.skipped);
    CHECK(sel.chosen_index == 0);
    CHECK(sel.score == doctest::Approx(-0.5).epsilon(1e-12));

    // Ties: equal length resolves to the lowest index.
    cands.clear();
    add(80, true);
    add(80, true);
    sel = rft_select(cands, 100);
    CHECK(sel.chosen_index == 0);
}

TEST_CASE("rft_select: brute-force oracle over all subsets of size <= 4") {
    const std::vector<std::size_t> lengths = {50, 80, 100, 130};
    const std::size_t ref = 100;
    for (int mask_len = 0; mask_len < 16; ++mask_len) {
        for (int mask_ok = 0; mask_ok < 16; ++mask_ok) {
            std::vector<RftCandidate> cands;
            for (int i = 0; i < 4; ++i) {
                if (!(mask_len & (1 << i))) continue;
                RftCandidate c;
                c.length = lengths[static_cast<std::size_t>(i)];
                c.correct = (mask_ok & (1 << i)) != 0;
                c.pattern = "c" + std::to_string(i);
                cands.push_back(c);
            }
            const auto sel = rft_select(cands, ref);

            bool any = false;
            double best = -1e9;
            std::size_t best_len = 0;
            std::size_t best_idx = 0;
            for (std::size_t i = 0; i < cands.size(); ++i) {
                if (!cands[i].correct) continue;
                const double s = 1.0 - double(cands[i].length) / double(ref);
                if (!any || s > best || (s == best && cands[i].length < best_len)) {
                    any = true;
                    best = s;
                    best_len = cands[i].length;
                    best_idx = i;
                }
            }
            CHECK(sel.skipped == !any);
            if (any) {
                CHECK(sel.chosen_index == best_idx);
                CHECK(sel.score == doctest::Approx(best).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("stage2_train: only theta and the pause embedding row change") {
    const auto tk = model::ToyTokenizer::with_default_lexicon();
    model::Backbone student(tiny_config(111), tk);
    const Matrix e_before = student.params().E;
    const auto w_sum = student.tensor_checksum("head.W");
    const auto b_sum = student.tensor_checksum("head.b");

    Stage2Target target;
    target.trace_id = "t";
    target.prompt = tk.encode("Tom has 3 apples. How many apples does Tom have now?\n");
    target.prompt.push_back(tk.think_open_id());
    target.completion = tk.encode("Start with 3.\n\n<pause>\n\nSo the result is 3.");
    target.completion.push_back(tk.think_close_id());
    for (int id : tk.encode("\nAnswer: 3")) target.completion.push_back(id);
    target.completion.push_back(tk.eos_id());

    RftConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.epochs = 1;
    stage2_train(student, {target}, cfg);

    CHECK(student.tensor_checksum("head.W") == w_sum);
    CHECK(student.tensor_checksum("head.b") == b_sum);
    const Matrix& e_after = student.params().E;
    const int pause = tk.pause_id();
    bool pause_row_moved = false;
    for (int v = 0; v < student.vocab_size(); ++v) {
        if (v == pause) {
            pause_row_moved = (e_after.row(v) - e_before.row(v)).norm() > 0.0;
        } else {
            CHECK((e_after.row(v) - e_before.row(v)).norm() == 0.0);
        }
    }
    CHECK(pause_row_moved);

    // Empty selection set: a strict no-op.
    model::Backbone untouched(tiny_config(121), tk);
    const auto sum0 = untouched.tensor_checksum("block0.W1");
    stage2_train(untouched, {}, cfg);
    CHECK(untouched.tensor_checksum("block0.W1") == sum0);
}

TEST_CASE("masked CE contributes zero gradient at pause-target logits") {
    const int pause = 0;
    const Matrix logits = random_logits(5, 3, 131);
    const std::vector<int> targets = {2, pause, 1};
    const auto mask = pause_mask_from_targets(targets, pause);
    auto pooled_ce = [&](const Matrix& l) { return masked_ce_loss(l, targets, mask).loss; };
    const double h = 1e-5;
    for (int i = 0; i < 5; ++i) {
        Matrix up = logits, down = logits;
        up(i, 1) += h;
        down(i, 1) -= h;
        CHECK((pooled_ce(up) - pooled_ce(down)) / (2 * h) == 0.0);
    }
}
