mod common;

use gaml::graphdata::{AttributedGraph, DatasetMeta, InputKind, LabelGraph};
use gaml::model::layers::{self, HighwayVars, MeanAdjacency, PairwiseVars, ReadoutVars};
use gaml::model::{init_params, AttentionMode, ForwardOptions, Model, ModelConfig};
use gaml::numerics::{Tape, Tensor};
use gaml::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<f64>>;

fn random(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn rows(t: &Tensor) -> Mat {
    t.to_rows()
}

fn vec_mat(v: &[f64], m: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; m[0].len()];
    for (k, &vk) in v.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += vk * m[k][j];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn sig(x: f64) -> f64 {
    (1.0 / (1.0 + (-x).exp())).clamp(1e-12, 1.0 - 1e-12)
}

fn weighted_sum(weights: &[f64], states: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; states[0].len()];
    for (w, s) in weights.iter().zip(states) {
        for (o, v) in out.iter_mut().zip(s) {
            *o += w * v;
        }
    }
    out
}

/// Scalar highway: `(1 − α) prev + α relu(cand)`.
fn highway_ref(model: &Model, prefix: &str, prev: &[f64], msg: &[f64]) -> Vec<f64> {
    let p = |n: &str| rows(model.params.by_name(&format!("{prefix}.{n}")).unwrap());
    let (gw, gu, gb, cw, cu, cb) = (p("gate_w"), p("gate_u"), p("gate_b"), p("cand_w"), p("cand_u"), p("cand_b"));
    let g1 = vec_mat(prev, &gw);
    let g2 = vec_mat(msg, &gu);
    let c1 = vec_mat(prev, &cw);
    let c2 = vec_mat(msg, &cu);
    (0..prev.len())
        .map(|k| {
            let a = sig(g1[k] + g2[k] + gb[0][k]);
            let c = (c1[k] + c2[k] + cb[0][k]).max(0.0);
            (1.0 - a) * prev[k] + a * c
        })
        .collect()
}

fn mean_pool_ref(states: &Mat, neighbors: &[Vec<(usize, usize)>], weights: &[Mat]) -> Mat {
    let width = weights.first().map_or(states[0].len(), |w| w[0].len());
    neighbors
        .iter()
        .map(|nb| {
            let mut acc = vec![0.0; width];
            for &(j, e) in nb {
                for (a, v) in acc.iter_mut().zip(vec_mat(&states[j], &weights[e])) {
                    *a += v / nb.len() as f64;
                }
            }
            acc
        })
        .collect()
}

/// Independent forward pass written with plain loops, one scalar formula at a time.
fn reference_forward(model: &Model, graph: &AttributedGraph, label_graph: Option<&LabelGraph>) -> Vec<f64> {
    let p = |n: &str| rows(model.params.by_name(n).unwrap());
    let cfg = &model.config;
    let n = graph.num_nodes();
    let c = model.num_labels();
    let mut x: Mat = match cfg.input_kind {
        InputKind::Graph => {
            let emb = p("node_embedding");
            graph.node_types().iter().map(|&t| emb[t].clone()).collect()
        }
        InputKind::Vector => {
            let (w, b) = (p("input_proj.w"), p("input_proj.b"));
            let f = rows(graph.node_features().unwrap());
            f.iter()
                .map(|r| vec_mat(r, &w).iter().zip(&b[0]).map(|(v, bb)| (v + bb).max(0.0)).collect())
                .collect()
        }
    };
    let mut l = p("label_embedding");
    let edge_w: Vec<Mat> = (0..model.meta.num_edge_types)
        .filter_map(|e| model.params.by_name(&format!("edge.{e}")).map(rows))
        .collect();
    let nb: Vec<Vec<(usize, usize)>> = (0..n).map(|i| graph.neighbors(i).to_vec()).collect();
    for _ in 0..cfg.layers {
        let mu = if edge_w.is_empty() {
            vec![vec![0.0; cfg.node_dim]; n]
        } else {
            mean_pool_ref(&x, &nb, &edge_w)
        };
        let (m_in, m_lab): (Mat, Mat) = match cfg.attention {
            AttentionMode::Pairwise => {
                let (u, wn, wl, b) = (p("attn.u"), p("attn.w_node"), p("attn.w_label"), p("attn.b"));
                let px: Mat = x.iter().map(|r| vec_mat(r, &wn)).collect();
                let pl: Mat = l.iter().map(|r| vec_mat(r, &wl)).collect();
                let s: Mat = (0..n)
                    .map(|i| {
                        (0..c)
                            .map(|cc| (0..u.len()).map(|k| u[k][0] * (px[i][k] + pl[cc][k] + b[0][k]).tanh()).sum())
                            .collect()
                    })
                    .collect();
                let m_in = (0..n).map(|i| weighted_sum(&softmax(&s[i]), &l)).collect();
                let m_lab = (0..c)
                    .map(|cc| {
                        let col: Vec<f64> = (0..n).map(|i| s[i][cc]).collect();
                        weighted_sum(&softmax(&col), &x)
                    })
                    .collect();
                (m_in, m_lab)
            }
            AttentionMode::Hierarchical { factors } => {
                let (u1, u2, w1, w2, z) = (p("attn.u1"), p("attn.u2"), p("attn.w1"), p("attn.w2"), p("attn.factors"));
                let score = |v: &[f64], w: &Mat, u: &Mat, k: usize| -> f64 {
                    let h = vec_mat(v, w);
                    (0..h.len()).map(|d| u[d][0] * (h[d] + z[k][d]).tanh()).sum()
                };
                let s1: Mat = x.iter().map(|xi| (0..factors).map(|k| score(xi, &w1, &u1, k)).collect()).collect();
                let s2: Mat = l.iter().map(|lc| (0..factors).map(|k| score(lc, &w2, &u2, k)).collect()).collect();
                let lambda: Mat = (0..factors)
                    .map(|k| weighted_sum(&softmax(&(0..c).map(|cc| s2[cc][k]).collect::<Vec<_>>()), &l))
                    .collect();
                let chi: Mat = (0..factors)
                    .map(|k| weighted_sum(&softmax(&(0..n).map(|i| s1[i][k]).collect::<Vec<_>>()), &x))
                    .collect();
                let m_in = (0..n).map(|i| weighted_sum(&softmax(&s1[i]), &lambda)).collect();
                let m_lab = (0..c).map(|cc| weighted_sum(&softmax(&s2[cc]), &chi)).collect();
                (m_in, m_lab)
            }
            other => panic!("reference does not cover {other:?}"),
        };
        let label_msgs: Mat = match label_graph {
            Some(lg) if cfg.use_label_graph => {
                let lw: Vec<Mat> = (0..cfg.label_edge_types)
                    .map(|e| rows(model.params.by_name(&format!("label_edge.{e}")).unwrap()))
                    .collect();
                let lnb: Vec<Vec<(usize, usize)>> = (0..c).map(|cc| lg.neighbors(cc).to_vec()).collect();
                let pooled = mean_pool_ref(&l, &lnb, &lw);
                m_lab.iter().zip(pooled).map(|(a, b)| [a.clone(), b].concat()).collect()
            }
            _ => m_lab,
        };
        let x_next: Mat = (0..n)
            .map(|i| highway_ref(model, "node_hw", &x[i], &[mu[i].clone(), m_in[i].clone()].concat()))
            .collect();
        let l_next: Mat = (0..c).map(|cc| highway_ref(model, "label_hw", &l[cc], &label_msgs[cc])).collect();
        x = x_next;
        l = l_next;
    }
    let (w1, b1, w2, b2) = (p("readout.w1"), p("readout.b1"), p("readout.w2"), p("readout.b2"));
    l.iter()
        .map(|lc| {
            let h: Vec<f64> = vec_mat(lc, &w1).iter().zip(&b1[0]).map(|(v, b)| (v + b).max(0.0)).collect();
            sig(dot(&h, &w2.iter().map(|r| r[0]).collect::<Vec<_>>()) + b2[0][0])
        })
        .collect()
}

fn graph_model(attention: AttentionMode, layers: usize, lg: bool, seed: u64) -> Model {
    Model::new(common::tiny_config(attention, layers, lg), common::meta(3, 3, 2), seed).unwrap()
}

fn opts(lg: Option<&LabelGraph>) -> ForwardOptions<'_> {
    ForwardOptions {
        label_graph: lg,
        ..Default::default()
    }
}

#[test]
fn init_is_deterministic_and_glorot_scaled() {
    let cfg = ModelConfig {
        node_dim: 50,
        ..ModelConfig::default()
    };
    let a = init_params(&cfg, &common::meta(3, 4, 2), 5).unwrap();
    let b = init_params(&cfg, &common::meta(3, 4, 2), 5).unwrap();
    assert_eq!(a, b);
    let w = a.by_name("edge.0").unwrap();
    assert_eq!(w.shape(), [50, 50]);
    let n = w.len() as f64;
    let mean = w.data().iter().sum::<f64>() / n;
    let std = (w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    // Uniform on [−a, a] with a = √(6 / (fan_in + fan_out)) has std a / √3.
    let expected = (6.0f64 / 100.0).sqrt() / 3f64.sqrt();
    assert!((std / expected - 1.0).abs() < 0.2, "{std} vs {expected}");
    let bound = (6.0f64 / 100.0).sqrt();
    assert!(w.data().iter().all(|v| v.abs() <= bound));
}

#[test]
fn embedding_examples_with_closed_gates() {
    let model = graph_model(AttentionMode::Pairwise, 1, false, 2);
    let g = AttributedGraph::new(vec![1, 0, 1], vec![(0, 1, 0), (1, 2, 1)]).unwrap();
    let out = model
        .forward(
            &g,
            ForwardOptions {
                close_gates: true,
                ..Default::default()
            },
        )
        .unwrap();
    assert_eq!(out.node_states.row(0), out.node_states.row(2));
    assert_eq!(out.node_states.row(0), model.params.by_name("node_embedding").unwrap().row(1));
    assert_eq!(&out.label_states, model.params.by_name("label_embedding").unwrap());
}

#[test]
fn node_type_outside_table_is_rejected() {
    let model = graph_model(AttentionMode::Pairwise, 1, false, 2);
    let g = AttributedGraph::new(vec![0, 7], vec![(0, 1, 0)]).unwrap();
    assert!(matches!(model.forward(&g, opts(None)), Err(Error::Validation(_))));
    let g = AttributedGraph::new(vec![0, 1], vec![(0, 1, 5)]).unwrap();
    assert!(matches!(model.forward(&g, opts(None)), Err(Error::Validation(_))));
}

#[test]
fn dropout_is_unbiased() {
    let model = graph_model(AttentionMode::Pairwise, 1, false, 3);
    let g = AttributedGraph::new(vec![0, 1, 2, 1], vec![(0, 1, 0), (1, 2, 0), (2, 3, 1)]).unwrap();
    let clean = model
        .forward(
            &g,
            ForwardOptions {
                close_gates: true,
                ..Default::default()
            },
        )
        .unwrap()
        .node_states;
    let draws = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut acc = Tensor::zeros(clean.rows(), clean.cols());
    let mut zeros = 0usize;
    for _ in 0..draws {
        let out = model
            .forward(
                &g,
                ForwardOptions {
                    close_gates: true,
                    dropout_rng: Some(&mut rng),
                    ..Default::default()
                },
            )
            .unwrap();
        zeros += out.node_states.data().iter().filter(|&&v| v == 0.0).count();
        acc.add_assign(&out.node_states).unwrap();
    }
    let mean = acc.map(|v| v / draws as f64);
    let diff: f64 = mean.data().iter().zip(clean.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = clean.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(diff / norm < 0.02, "relative deviation {}", diff / norm);
    let rate = zeros as f64 / (draws * clean.len()) as f64;
    assert!((rate - 0.3).abs() < 0.01, "drop rate {rate}");
}

#[test]
fn neighbor_pool_examples() {
    let g = AttributedGraph::new(vec![0, 0, 0, 0], vec![(0, 1, 0), (0, 2, 0)]).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_rows(&[vec![9.0, 9.0], vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 5.0]]).unwrap());
    let w = tape.leaf(Tensor::identity(2));
    let mu = layers::mean_pool(&mut tape, x, &MeanAdjacency::from_graph(&g, 1), &[w]).unwrap();
    assert_eq!(tape.value(mu).row(0), &[2.0, 3.0]);
    assert_eq!(tape.value(mu).row(3), &[0.0, 0.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let g = common::random_graph(&mut rng, 9, 3, 3, 0.3);
        let xs = random(&mut rng, 9, 4);
        let ws: Vec<Tensor> = (0..3).map(|_| random(&mut rng, 4, 5)).collect();
        let mut tape = Tape::new();
        let x = tape.leaf(xs.clone());
        let wv: Vec<_> = ws.iter().map(|w| tape.leaf(w.clone())).collect();
        let mu = layers::mean_pool(&mut tape, x, &MeanAdjacency::from_graph(&g, 3), &wv).unwrap();
        let nb: Vec<_> = (0..9).map(|i| g.neighbors(i).to_vec()).collect();
        let expect = mean_pool_ref(&rows(&xs), &nb, &ws.iter().map(rows).collect::<Vec<_>>());
        assert!(tape.value(mu).max_abs_diff(&Tensor::from_rows(&expect).unwrap()) < 1e-12);
    }
}

fn pairwise_vars(tape: &mut Tape, rng: &mut impl Rng, dx: usize, dl: usize, dz: usize) -> (PairwiseVars, [Tensor; 4]) {
    let t = [random(rng, dz, 1), random(rng, dx, dz), random(rng, dl, dz), random(rng, 1, dz)];
    let vars = PairwiseVars {
        u: tape.leaf(t[0].clone()),
        w_node: tape.leaf(t[1].clone()),
        w_label: tape.leaf(t[2].clone()),
        b: tape.leaf(t[3].clone()),
    };
    (vars, t)
}

#[test]
fn pairwise_score_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tape = Tape::new();
    let xs = random(&mut rng, 3, 4);
    let ls = random(&mut rng, 2, 3);
    let x = tape.leaf(xs.clone());
    let l = tape.leaf(ls.clone());
    let (mut p, t) = pairwise_vars(&mut tape, &mut rng, 4, 3, 5);
    let s = layers::pairwise_scores(&mut tape, x, l, &p).unwrap();
    for i in 0..3 {
        for c in 0..2 {
            let hx = vec_mat(xs.row(i), &rows(&t[1]));
            let hl = vec_mat(ls.row(c), &rows(&t[2]));
            let expect: f64 = (0..5).map(|k| t[0].get(k, 0) * (hx[k] + hl[k] + t[3].get(0, k)).tanh()).sum();
            assert!((tape.value(s).get(i, c) - expect).abs() < 1e-12);
        }
    }

    p.u = tape.leaf(Tensor::zeros(5, 1));
    let s = layers::pairwise_scores(&mut tape, x, l, &p).unwrap();
    assert!(tape.value(s).data().iter().all(|&v| v == 0.0));
    let (_, a) = layers::input_to_label_message(&mut tape, s, l).unwrap();
    assert!(tape.value(a).data().iter().all(|&v| (v - 0.5).abs() < 1e-15));

    let dup = tape.leaf(Tensor::from_rows(&[xs.row(0).to_vec(), xs.row(1).to_vec(), xs.row(0).to_vec()]).unwrap());
    let (p, _) = pairwise_vars(&mut tape, &mut rng, 4, 3, 5);
    let s = layers::pairwise_scores(&mut tape, dup, l, &p).unwrap();
    assert_eq!(tape.value(s).row(0), tape.value(s).row(2));
}

#[test]
fn attention_message_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut tape = Tape::new();
    let ss = random(&mut rng, 4, 3);
    let ls = random(&mut rng, 3, 2);
    let xs = random(&mut rng, 4, 5);
    let (s, l, x) = (tape.leaf(ss.clone()), tape.leaf(ls.clone()), tape.leaf(xs.clone()));

    let (m, _) = layers::input_to_label_message(&mut tape, s, l).unwrap();
    for i in 0..4 {
        let expect = weighted_sum(&softmax(ss.row(i)), &rows(&ls));
        for (a, b) in tape.value(m).row(i).iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let (m, a) = layers::label_to_input_message(&mut tape, s, x).unwrap();
    assert_eq!(tape.value(a).shape(), [3, 4]);
    for c in 0..3 {
        let col: Vec<f64> = (0..4).map(|i| ss.get(i, c)).collect();
        let expect = weighted_sum(&softmax(&col), &rows(&xs));
        for (a, b) in tape.value(m).row(c).iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    // A single label: every input node receives that label's state.
    let s1 = tape.leaf(random(&mut rng, 4, 1));
    let l1 = tape.leaf(ls.clone());
    let l1 = tape.gather_rows(l1, &[0]).unwrap();
    let (m, _) = layers::input_to_label_message(&mut tape, s1, l1).unwrap();
    for i in 0..4 {
        assert!(tape.value(m).row(i).iter().zip(ls.row(0)).all(|(a, b)| (a - b).abs() < 1e-15));
    }
    // A single input node: every label receives that node's state.
    let s1 = tape.leaf(random(&mut rng, 1, 3));
    let x1 = tape.gather_rows(x, &[2]).unwrap();
    let (m, _) = layers::label_to_input_message(&mut tape, s1, x1).unwrap();
    for c in 0..3 {
        assert!(tape.value(m).row(c).iter().zip(xs.row(2)).all(|(a, b)| (a - b).abs() < 1e-15));
    }
    // Uniform scores: plain means.
    let zero = tape.leaf(Tensor::zeros(4, 3));
    let (m, _) = layers::label_to_input_message(&mut tape, zero, x).unwrap();
    let mean = xs.sum(gaml::numerics::Axis::Column).map(|v| v / 4.0);
    assert!(Tensor::new(1, 5, tape.value(m).row(1).to_vec()).unwrap().max_abs_diff(&mean) < 1e-15);
    let (m, _) = layers::input_to_label_message(&mut tape, zero, l).unwrap();
    let mean = ls.sum(gaml::numerics::Axis::Column).map(|v| v / 3.0);
    assert!(Tensor::new(1, 2, tape.value(m).row(3).to_vec()).unwrap().max_abs_diff(&mean) < 1e-15);
}

fn hierarchical(model: &Model) -> (Tape, layers::HierarchicalVars, Vec<gaml::numerics::Var>) {
    let mut tape = Tape::new();
    let vars: Vec<_> = model.params.tensors().iter().map(|t| tape.leaf(t.clone())).collect();
    let idx = |n: &str| vars[model.params.layout().index_of(n).unwrap()];
    let h = layers::HierarchicalVars {
        u1: idx("attn.u1"),
        u2: idx("attn.u2"),
        w1: idx("attn.w1"),
        w2: idx("attn.w2"),
        factors: idx("attn.factors"),
    };
    (tape, h, vars)
}

#[test]
fn hierarchical_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = graph_model(AttentionMode::Hierarchical { factors: 1 }, 1, false, 8);
    let (mut tape, h, _) = hierarchical(&model);
    let xs = random(&mut rng, 5, 4);
    let ls = random(&mut rng, 3, 4);
    let (x, l) = (tape.leaf(xs.clone()), tape.leaf(ls.clone()));
    let out = layers::hierarchical_messages(&mut tape, x, l, &h).unwrap();
    let b = tape.value(out.labels_per_factor).clone();
    let lambda = weighted_sum(&(0..3).map(|c| b.get(c, 0)).collect::<Vec<_>>(), &rows(&ls));
    for i in 0..5 {
        assert!(tape.value(out.to_nodes).row(i).iter().zip(&lambda).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    let mut model = graph_model(AttentionMode::Hierarchical { factors: 3 }, 1, false, 8);
    for name in ["attn.u1", "attn.u2"] {
        model.params.by_name_mut(name).unwrap().data_mut().fill(0.0);
    }
    let (mut tape, h, _) = hierarchical(&model);
    let (x, l) = (tape.leaf(xs.clone()), tape.leaf(ls.clone()));
    let out = layers::hierarchical_messages(&mut tape, x, l, &h).unwrap();
    let mean_x = xs.sum(gaml::numerics::Axis::Column).map(|v| v / 5.0);
    for c in 0..3 {
        let row = Tensor::new(1, 4, tape.value(out.to_labels).row(c).to_vec()).unwrap();
        assert!(row.max_abs_diff(&mean_x) < 1e-12);
    }
}

#[test]
fn zero_factors_is_a_config_error() {
    let cfg = common::tiny_config(AttentionMode::Hierarchical { factors: 0 }, 1, false);
    assert!(matches!(Model::new(cfg, common::meta(2, 2, 1), 0), Err(Error::Config(_))));
    let cfg = ModelConfig {
        layers: 0,
        ..ModelConfig::default()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let cfg = ModelConfig {
        dropout: 1.0,
        ..ModelConfig::default()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

fn highway_setup(rng: &mut impl Rng) -> (Tape, HighwayVars, [Tensor; 6], Tensor, Tensor) {
    let t = [
        random(rng, 3, 3),
        random(rng, 2, 3),
        random(rng, 1, 3),
        random(rng, 3, 3),
        random(rng, 2, 3),
        random(rng, 1, 3),
    ];
    let mut tape = Tape::new();
    let v: Vec<_> = t.iter().map(|x| tape.leaf(x.clone())).collect();
    let hw = HighwayVars {
        gate_w: v[0],
        gate_u: v[1],
        gate_b: v[2],
        cand_w: v[3],
        cand_u: v[4],
        cand_b: v[5],
    };
    (tape, hw, t, random(rng, 4, 3), random(rng, 4, 2))
}

#[test]
fn highway_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut tape, mut hw, t, prev, msg) = highway_setup(&mut rng);
    let (p, m) = (tape.leaf(prev.clone()), tape.leaf(msg.clone()));
    let out = layers::highway(&mut tape, p, m, &hw, false).unwrap();
    for r in 0..4 {
        for k in 0..3 {
            let g = sig(dot(prev.row(r), &(0..3).map(|j| t[0].get(j, k)).collect::<Vec<_>>())
                + dot(msg.row(r), &(0..2).map(|j| t[1].get(j, k)).collect::<Vec<_>>())
                + t[2].get(0, k));
            let c = (dot(prev.row(r), &(0..3).map(|j| t[3].get(j, k)).collect::<Vec<_>>())
                + dot(msg.row(r), &(0..2).map(|j| t[4].get(j, k)).collect::<Vec<_>>())
                + t[5].get(0, k))
            .max(0.0);
            assert!((tape.value(out).get(r, k) - ((1.0 - g) * prev.get(r, k) + g * c)).abs() < 1e-12);
        }
    }

    hw.gate_b = tape.leaf(Tensor::filled(1, 3, -1e6));
    let closed = layers::highway(&mut tape, p, m, &hw, false).unwrap();
    assert!(tape.value(closed).max_abs_diff(&prev) < 1e-6);

    hw.gate_b = tape.leaf(Tensor::filled(1, 3, 1e6));
    let open = layers::highway(&mut tape, p, m, &hw, false).unwrap();
    let cand = prev.matmul(&t[3]).unwrap();
    let cand = cand.zip_map(&msg.matmul(&t[4]).unwrap(), |a, b| a + b).unwrap();
    let cand = Tensor::new(4, 3, cand.data().iter().enumerate().map(|(i, v)| (v + t[5].get(0, i % 3)).max(0.0)).collect()).unwrap();
    assert!(tape.value(open).max_abs_diff(&cand) < 1e-6);

    let bad = tape.leaf(random(&mut rng, 4, 5));
    assert!(matches!(layers::highway(&mut tape, p, bad, &hw, false), Err(Error::Shape { .. })));
}

#[test]
fn label_graph_pool_examples() {
    let mut tape = Tape::new();
    let ls = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
    let l = tape.leaf(ls.clone());
    let w = tape.leaf(Tensor::identity(2));
    let empty = MeanAdjacency::from_label_graph(&LabelGraph::empty(3));
    let mu = layers::mean_pool(&mut tape, l, &empty, &[w]).unwrap();
    assert_eq!(tape.value(mu), &Tensor::zeros(3, 2));

    let one = LabelGraph::new(3, 1, vec![(0, 1, 0)]).unwrap();
    let mu = layers::mean_pool(&mut tape, l, &MeanAdjacency::from_label_graph(&one), &[w]).unwrap();
    assert_eq!(tape.value(mu).row(1), ls.row(0));
    assert_eq!(tape.value(mu).row(0), &[0.0, 0.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10 {
        let lg = common::random_label_graph(&mut rng, 6, 2);
        let ls = random(&mut rng, 6, 3);
        let ws = [random(&mut rng, 3, 3), random(&mut rng, 3, 3)];
        let mut tape = Tape::new();
        let l = tape.leaf(ls.clone());
        let wv: Vec<_> = ws.iter().map(|w| tape.leaf(w.clone())).collect();
        let mu = layers::mean_pool(&mut tape, l, &MeanAdjacency::from_label_graph(&lg), &wv).unwrap();
        let nb: Vec<_> = (0..6).map(|c| lg.neighbors(c).to_vec()).collect();
        let expect = mean_pool_ref(&rows(&ls), &nb, &ws.iter().map(rows).collect::<Vec<_>>());
        assert!(tape.value(mu).max_abs_diff(&Tensor::from_rows(&expect).unwrap()) < 1e-12);
    }
}

#[test]
fn readout_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = [random(&mut rng, 3, 4), random(&mut rng, 1, 4), random(&mut rng, 4, 1), random(&mut rng, 1, 1)];
    let mut tape = Tape::new();
    let v: Vec<_> = t.iter().map(|x| tape.leaf(x.clone())).collect();
    let r = ReadoutVars {
        w1: v[0],
        b1: v[1],
        w2: v[2],
        b2: v[3],
    };
    let same = tape.leaf(Tensor::from_rows(&vec![vec![0.1, 0.2, 0.3]; 3]).unwrap());
    let o = layers::readout(&mut tape, same, &r).unwrap();
    assert_eq!(tape.value(o).shape(), [1, 3]);
    assert!(tape.value(o).data().iter().all(|&p| p == tape.value(o).get(0, 0)));

    let ls = random(&mut rng, 5, 3);
    let l = tape.leaf(ls.clone());
    let o = layers::readout(&mut tape, l, &r).unwrap();
    for c in 0..5 {
        let h: Vec<f64> = (0..4).map(|k| (dot(ls.row(c), &(0..3).map(|j| t[0].get(j, k)).collect::<Vec<_>>()) + t[1].get(0, k)).max(0.0)).collect();
        let expect = sig(dot(&h, t[2].data()) + t[3].get(0, 0));
        assert!((tape.value(o).get(0, c) - expect).abs() < 1e-12);
    }

    let zero = ReadoutVars {
        w1: tape.leaf(Tensor::zeros(3, 4)),
        b1: v[1],
        w2: tape.leaf(Tensor::zeros(4, 1)),
        b2: v[3],
    };
    let o = layers::readout(&mut tape, l, &zero).unwrap();
    assert!(tape.value(o).data().iter().all(|&p| p == sig(t[3].get(0, 0))));
}

#[test]
fn frozen_network_keeps_label_embedding() {
    let model = graph_model(AttentionMode::None, 1, false, 12);
    let g = AttributedGraph::new(vec![0, 1, 2], vec![(0, 1, 0), (1, 2, 1)]).unwrap();
    let out = model
        .forward(
            &g,
            ForwardOptions {
                close_gates: true,
                ..Default::default()
            },
        )
        .unwrap();
    assert_eq!(&out.label_states, model.params.by_name("label_embedding").unwrap());
}

#[test]
fn forward_matches_unrolled_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (mode, lg) in [
        (AttentionMode::Pairwise, false),
        (AttentionMode::Pairwise, true),
        (AttentionMode::Hierarchical { factors: 2 }, false),
        (AttentionMode::Hierarchical { factors: 3 }, true),
    ] {
        for seed in 0..5 {
            let model = Model::new(common::tiny_config(mode, 2, lg), common::meta(2, 3, 2), seed).unwrap();
            let g = common::random_graph(&mut rng, 4, 3, 2, 0.3);
            let label_graph = LabelGraph::new(2, 2, vec![(0, 1, 1), (1, 0, 0)]).unwrap();
            let lg_opt = lg.then_some(&label_graph);
            let got = model.predict_graph(&g, lg_opt);
            let expect = reference_forward(&model, &g, lg_opt);
            for (a, b) in got.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12, "{mode:?} lg={lg}: {a} vs {b}");
            }
        }
    }
}

trait PredictGraph {
    fn predict_graph(&self, g: &AttributedGraph, lg: Option<&LabelGraph>) -> Vec<f64>;
}

impl PredictGraph for Model {
    fn predict_graph(&self, g: &AttributedGraph, lg: Option<&LabelGraph>) -> Vec<f64> {
        self.forward(g, opts(lg)).unwrap().outputs.into_data()
    }
}

fn vector_model(attention: AttentionMode, layers: usize, d: usize, seed: u64) -> Model {
    let cfg = ModelConfig {
        input_kind: InputKind::Vector,
        ..common::tiny_config(attention, layers, false)
    };
    let meta = DatasetMeta {
        num_labels: 3,
        num_node_types: 1,
        num_edge_types: 1,
        input_kind: InputKind::Vector,
        feature_dim: Some(d),
    };
    Model::new(cfg, meta, seed).unwrap()
}

#[test]
fn vector_forward_matches_singleton_graph_and_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for mode in [
        AttentionMode::Pairwise,
        AttentionMode::Hierarchical { factors: 2 },
        AttentionMode::LabelToInputOnly,
        AttentionMode::None,
    ] {
        let model = vector_model(mode, 2, 5, 3);
        let f: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = model.forward_vector(&f, opts(None)).unwrap();
        let g = AttributedGraph::with_features(vec![0], vec![], Tensor::row_vector(f.clone())).unwrap();
        let s = model.forward(&g, opts(None)).unwrap();
        assert!(v.outputs.max_abs_diff(&s.outputs) < 1e-9, "{mode:?}");
        assert!(v.label_states.max_abs_diff(&s.label_states) < 1e-9, "{mode:?}");
        assert_eq!(v.trace.total_score_evaluations(), s.trace.total_score_evaluations());
        if matches!(mode, AttentionMode::Pairwise | AttentionMode::Hierarchical { .. }) {
            let expect = reference_forward(&model, &g, None);
            for (a, b) in v.outputs.data().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let closed = model
            .forward_vector(
                &f,
                ForwardOptions {
                    close_gates: true,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(&closed.label_states, model.params.by_name("label_embedding").unwrap());
    }
}

#[test]
fn input_kind_mismatches() {
    let model = vector_model(AttentionMode::Pairwise, 1, 2, 0);
    let g = AttributedGraph::with_features(vec![0, 0], vec![(0, 1, 0)], Tensor::zeros(2, 2)).unwrap();
    assert!(model.forward(&g, opts(None)).is_err());
    assert!(matches!(model.forward_vector(&[0.0], opts(None)), Err(Error::Validation(_))));
    let graph_model = graph_model(AttentionMode::Pairwise, 1, false, 0);
    assert!(matches!(graph_model.forward_vector(&[0.0, 0.0], opts(None)), Err(Error::Config(_))));
    let lg_model = graph_model_with_lg();
    let g = AttributedGraph::new(vec![0], vec![]).unwrap();
    assert!(matches!(lg_model.forward(&g, opts(None)), Err(Error::Config(_))));
}

fn graph_model_with_lg() -> Model {
    graph_model(AttentionMode::Pairwise, 1, true, 0)
}

#[test]
fn empty_label_graph_still_runs() {
    let model = graph_model_with_lg();
    let g = AttributedGraph::new(vec![0, 1], vec![(0, 1, 0)]).unwrap();
    let out = model.forward(&g, opts(Some(&LabelGraph::empty(3)))).unwrap();
    assert!(out.outputs.is_finite());
}

#[test]
fn score_counters() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let g = common::random_graph(&mut rng, 7, 3, 2, 0.2);
    let pair = graph_model(AttentionMode::Pairwise, 3, false, 1);
    let out = pair.forward(&g, opts(None)).unwrap();
    assert!(out.trace.layers.iter().all(|l| l.score_evaluations == 7 * 3));
    let hier = graph_model(AttentionMode::Hierarchical { factors: 4 }, 3, false, 1);
    let out = hier.forward(&g, opts(None)).unwrap();
    assert!(out.trace.layers.iter().all(|l| l.score_evaluations == 7 * 4 + 3 * 4));
}

fn arb_instance() -> impl Strategy<Value = (u64, usize, usize, bool)> {
    (any::<u64>(), 1usize..9, 0usize..3, any::<bool>())
}

fn mode_of(k: usize) -> AttentionMode {
    match k {
        0 => AttentionMode::Pairwise,
        1 => AttentionMode::Hierarchical { factors: 3 },
        _ => AttentionMode::LabelToInputOnly,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_rows_are_distributions((seed, n, mode, lg) in arb_instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = graph_model(mode_of(mode), 2, lg, seed);
        let g = common::random_graph(&mut rng, n, 3, 2, 0.3);
        let label_graph = common::random_label_graph(&mut rng, 3, 2);
        let out = model.forward(&g, opts(Some(&label_graph))).unwrap();
        for layer in &out.trace.layers {
            let mut mats = vec![&layer.label_to_input, &layer.input_to_label];
            let transposed;
            if let Some(f) = &layer.factors {
                mats.push(&f.node_over_factors);
                mats.push(&f.label_over_factors);
                transposed = [f.labels_per_factor.transpose(), f.nodes_per_factor.transpose()];
                mats.extend(transposed.iter());
            }
            for m in mats {
                for r in 0..m.rows() {
                    let s: f64 = m.row(r).iter().sum();
                    prop_assert!((s - 1.0).abs() < 1e-9);
                    prop_assert!(m.row(r).iter().all(|&p| p > 0.0));
                }
            }
        }
    }

    #[test]
    fn node_permutation_invariance((seed, n, mode, lg) in arb_instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = graph_model(mode_of(mode), 3, lg, seed);
        let g = common::random_graph(&mut rng, n, 3, 2, 0.3);
        let label_graph = common::random_label_graph(&mut rng, 3, 2);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let a = model.forward(&g, opts(Some(&label_graph))).unwrap();
        let b = model.forward(&g.permute_nodes(&perm).unwrap(), opts(Some(&label_graph))).unwrap();
        prop_assert!(a.outputs.max_abs_diff(&b.outputs) <= 1e-9);
        for (la, lb) in a.trace.layers.iter().zip(&b.trace.layers) {
            for c in 0..3 {
                for i in 0..n {
                    prop_assert!((la.label_to_input.get(c, i) - lb.label_to_input.get(c, perm[i])).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn label_permutation_equivariance((seed, n, mode, lg) in arb_instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = graph_model(mode_of(mode), 2, lg, seed);
        let g = common::random_graph(&mut rng, n, 3, 2, 0.3);
        let label_graph = common::random_label_graph(&mut rng, 3, 2);
        let mut perm: Vec<usize> = (0..3).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let mut permuted = model.clone();
        let m = model.params.by_name("label_embedding").unwrap().clone();
        let pm = permuted.params.by_name_mut("label_embedding").unwrap();
        for c in 0..3 {
            pm.row_mut(perm[c]).copy_from_slice(m.row(c));
        }
        let a = model.forward(&g, opts(Some(&label_graph))).unwrap();
        let b = permuted.forward(&g, opts(Some(&label_graph.permute(&perm).unwrap()))).unwrap();
        for c in 0..3 {
            prop_assert!((a.outputs.get(0, c) - b.outputs.get(0, perm[c])).abs() <= 1e-9);
        }
    }
}
