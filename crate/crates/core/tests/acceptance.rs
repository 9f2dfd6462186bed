//! One line per acceptance criterion. Runs without the test harness so the
//! verdicts always show up in the output.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use agentboot::augmentation::{augment_actor_critic, augment_failed, propagate_downstream, AugmentBudgets, AugmentOutcome, Augmenter};
use agentboot::experience::{
    dataset_file, filter_good, score, validate_chat_jsonl, Provenance, RewardConfig, Setting, StepRecord, Trajectory,
    TrajectoryDetail,
};
use agentboot::games::{
    parse_message, parse_trade, render_message, run_match, utility, GameConfig, GameError, GameKind, GameState,
    GrammarError, LlmPolicy, Move, MoveError, Outcome, PairingScore, Player, ScriptedPolicy, Tag, TagMessage,
    TradeError, TradeProposal,
};
use agentboot::model::{
    AgentId, Backend, BackendError, BackendKind, GenerationRequest, Generator, ModelRef, RemoteBackend, RemoteConfig,
    ScriptedBackend, TaskKind,
};
use agentboot::topology::presets::{actor_critic_agents, feedback_agent, rephrase_agent};
use agentboot::topology::{run_actor_critic, ActorCriticBudget, Pipeline, ProblemInstance, TopologyPreset};
use agentboot::train::{
    evaluate, EvalReport, FineTuneJob, FineTuneProvider, JobStatus, ModelRegistry, NullProvider, TrainError, Trainer,
    Workload,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Result<Verdict, String>);
type GrammarCase = (String, GameKind, fn(&GrammarError) -> bool);
type TradeCase = (&'static str, fn(&TradeError) -> bool);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn within(start: Instant, limit: Duration, what: &str) -> Check {
    let took = start.elapsed();
    ensure!(took < limit, "{what} took {took:?}, limit {limit:?}");
    Ok(())
}

enum Verdict {
    Pass,
    Fail(String),
    Skip(String),
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("grammar round-trip", || grammar_round_trip().map(|_| Verdict::Pass)),
        ("game-rule oracle", || game_rules().map(|_| Verdict::Pass)),
        ("filter oracle", || filter_oracle().map(|_| Verdict::Pass)),
        ("augmentation budget accounting", || budget_accounting().map(|_| Verdict::Pass)),
        ("propagation correctness", || propagation().map(|_| Verdict::Pass)),
        ("information-flow security", || information_flow().map(|_| Verdict::Pass)),
        ("end-to-end dry run", || end_to_end().map(|_| Verdict::Pass)),
        ("metrics oracle", || metrics().map(|_| Verdict::Pass)),
        ("live-backend smoke", live_smoke),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let verdict = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(Ok(v)) => v,
            Ok(Err(msg)) => Verdict::Fail(msg),
            Err(panic) => Verdict::Fail(
                panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()),
            ),
        };
        match verdict {
            Verdict::Pass => println!("PASS  {name}"),
            Verdict::Skip(why) => println!("SKIP  {name}: {why}"),
            Verdict::Fail(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- grammar

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz ABCDEFXYZ0123456789:,.|!?<>()-";
    let len = rng.gen_range(0..40);
    let raw: String = (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char).collect();
    raw.replace("</", "< /").replace("<", "< ").trim().to_string()
}

fn random_trade(rng: &mut ChaCha8Rng, resources: &[String]) -> TradeProposal {
    let mut t = TradeProposal::new();
    for p in [Player::Red, Player::Blue] {
        for r in resources {
            if rng.gen_bool(0.6) {
                t = t.give(p, r.clone(), rng.gen_range(0..200));
            }
        }
    }
    t
}

fn grammar_round_trip() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let kinds = [GameKind::ResourceExchange, GameKind::Ultimatum, GameKind::SellBuy];
    for i in 0..1000 {
        let kind = kinds[i % 3];
        let cfg = kind.default_config();
        let mut m = TagMessage::new();
        for &tag in Tag::contract(kind) {
            let content = match tag {
                Tag::NewlyProposedTrade if rng.gen_bool(0.7) => random_trade(&mut rng, &cfg.resources).render(),
                Tag::NewlyProposedTrade => "NONE".into(),
                Tag::PlayerAnswer => ["ACCEPT", "REJECT", "NONE", "PROPOSAL"][rng.gen_range(0..4)].into(),
                _ => random_text(&mut rng),
            };
            m = m.with(tag, content);
        }
        let parsed = parse_message(&render_message(&m), kind).map_err(|e| format!("message {i}: {e}"))?;
        ensure!(parsed == m, "message {i} changed on round trip");
        let trade = parse_trade(m.get(Tag::NewlyProposedTrade).unwrap(), &cfg.resources).map_err(err)?;
        if let Some(t) = &trade {
            ensure!(parse_trade(&t.render(), &cfg.resources).map_err(err)?.as_ref() == Some(t), "trade {i}");
        }
    }

    // Fragments copied from the game prompts.
    let re = "<my name> Player RED </my name>\n<my resources> X: 25, Y: 5 </my resources>\n\
              <my goals> X: 15, Y: 15 </my goals>\n<reason> [add reasoning] </reason>\n\
              <player answer> ACCEPT </player answer>\n<message> [add message] </message\n\
              <newly proposed trade> NONE </newly proposed trade>";
    let want = TagMessage::new()
        .with(Tag::MyName, "Player RED")
        .with(Tag::MyResources, "X: 25, Y: 5")
        .with(Tag::MyGoals, "X: 15, Y: 15")
        .with(Tag::Reason, "[add reasoning]")
        .with(Tag::PlayerAnswer, "ACCEPT")
        .with(Tag::Message, "[add message]")
        .with(Tag::NewlyProposedTrade, "NONE");
    ensure!(parse_message(re, GameKind::ResourceExchange).map_err(err)? == want, "resource-exchange fragment");

    let sb = "<proposal count> 1 </proposal count>\n<my resources> ZUP: 100 </my resources>\n\
              <my goals> Buy resources with <ZUP>. You are willing to pay at most X: 70 ZUP for the resources. </my goals>\n\
              <reason> opening offer </reason>\n<player answer> PROPOSAL </player answer>\n\
              <newly proposed trade> Player RED Gives X: 1 | Player BLUE Gives ZUP: 45 </newly proposed trade>\n\
              <message>your message here</message>";
    let m = parse_message(sb, GameKind::SellBuy).map_err(err)?;
    ensure!(
        m.get(Tag::MyGoals) == Some("Buy resources with <ZUP>. You are willing to pay at most X: 70 ZUP for the resources."),
        "sell-buy goals"
    );
    ensure!(m.get(Tag::Message) == Some("your message here"), "sell-buy message");
    let sale = parse_trade(m.get(Tag::NewlyProposedTrade).unwrap(), &["X".into(), "ZUP".into()]).map_err(err)?;
    ensure!(
        sale == Some(TradeProposal::new().give(Player::Red, "X", 1).give(Player::Blue, "ZUP", 45)),
        "sell-buy trade"
    );

    let ul = "<my name> Player BLUE </my name>\n<move> 4 / 4  </move> \n<my resources> Dollars: 0 </my resources>\n\
              <reason> last move </reason>\n<player answer> REJECT </player answer>\n<message> no </message\n\
              <newly proposed trade> NONE </newly proposed trade>";
    let m = parse_message(ul, GameKind::Ultimatum).map_err(err)?;
    ensure!(m.get(Tag::Move) == Some("4 / 4") && m.get(Tag::PlayerAnswer) == Some("REJECT"), "ultimatum fragment");
    let split = parse_trade("Player RED Gives Dollars: 40 | Player BLUE Gives Dollars: 0", &["Dollars".into()]).map_err(err)?;
    ensure!(
        split == Some(TradeProposal::new().give(Player::Red, "Dollars", 40).give(Player::Blue, "Dollars", 0)),
        "ultimatum split"
    );
    let template = parse_trade(
        "Player RED Gives X: 5, ... | Player BLUE Gives Y: 3, ...",
        &["X".into(), "Y".into()],
    )
    .map_err(err)?;
    ensure!(template == Some(TradeProposal::new().give(Player::Red, "X", 5).give(Player::Blue, "Y", 3)), "ellipsis");

    // Malformed corpus.
    let tag_cases: Vec<GrammarCase> = vec![
        (re.replace("<reason> [add reasoning] </reason>\n", ""), GameKind::ResourceExchange, |e| {
            *e == GrammarError::MissingTag("reason")
        }),
        (re.replace(" </player answer>", ""), GameKind::ResourceExchange, |e| matches!(e, GrammarError::MalformedTag(_))),
        (re.to_string() + "\n<reason> again </reason>", GameKind::ResourceExchange, |e| {
            *e == GrammarError::DuplicateTag("reason")
        }),
        (re.to_string() + "\n<mood> calm </mood>", GameKind::ResourceExchange, |e| {
            *e == GrammarError::UnknownTag("mood".into())
        }),
        (re.to_string() + "\n<move> 1 / 4 </move>", GameKind::ResourceExchange, |e| {
            *e == GrammarError::UnknownTag("move".into())
        }),
        (
            re.replace("<my name> Player RED </my name>\n", "") + "\n<my name> Player RED </my name>",
            GameKind::ResourceExchange,
            |e| *e == GrammarError::OutOfOrder("my resources"),
        ),
        ("</reason> stray".to_string(), GameKind::ResourceExchange, |e| matches!(e, GrammarError::MalformedTag(0))),
        (String::new(), GameKind::ResourceExchange, |e| *e == GrammarError::MissingTag("my name")),
        (sb.replace("<proposal count> 1 </proposal count>\n", ""), GameKind::SellBuy, |e| {
            *e == GrammarError::MissingTag("proposal count")
        }),
        (ul.replace("<move> 4 / 4  </move> \n", ""), GameKind::Ultimatum, |e| *e == GrammarError::MissingTag("move")),
        (re.replace("<my name>", "<my_name>").replace("</my name>", "</my_name>"), GameKind::ResourceExchange, |e| {
            *e == GrammarError::MissingTag("my name")
        }),
    ];
    for (i, (raw, kind, expected)) in tag_cases.iter().enumerate() {
        match parse_message(raw, *kind) {
            Err(e) if expected(&e) => {}
            other => return Err(format!("malformed case {i} gave {other:?}")),
        }
    }
    let xy: Vec<String> = vec!["X".into(), "Y".into()];
    let trade_cases: Vec<TradeCase> = vec![
        ("Player RED Gives X: 1.5 | Player BLUE Gives Y: 1", |e| matches!(e, TradeError::NonIntegerAmount(_))),
        ("Player RED Gives X: -3 | Player BLUE Gives Y: 1", |e| matches!(e, TradeError::NegativeAmount(_))),
        ("Player RED Gives Z: 3 | Player BLUE Gives Y: 1", |e| matches!(e, TradeError::UnknownResource(_))),
        ("Player RED Gives X: 3, Player BLUE Gives Y: 1", |e| matches!(e, TradeError::SyntaxError(_))),
        ("Player RED Gives X: 3 | Player RED Gives Y: 1", |e| matches!(e, TradeError::SyntaxError(_))),
        ("Player RED Gives X: lots | Player BLUE Gives Y: 1", |e| matches!(e, TradeError::SyntaxError(_))),
    ];
    for (raw, expected) in trade_cases {
        match parse_trade(raw, &xy) {
            Err(e) if expected(&e) => {}
            other => return Err(format!("malformed trade {raw:?} gave {other:?}")),
        }
    }
    within(start, Duration::from_secs(5), "grammar checks")
}

// ---------------------------------------------------------------- games

/// A small move alphabet per game, filtered by the rule checker.
fn candidate_moves(cfg: &GameConfig) -> Vec<Move> {
    let mut moves = vec![Move::Accept, Move::Reject, Move::Pass];
    let trades = match cfg.kind {
        GameKind::ResourceExchange => vec![
            TradeProposal::new().give(Player::Red, "X", 5).give(Player::Blue, "Y", 5),
            TradeProposal::new().give(Player::Red, "X", 25).give(Player::Blue, "Y", 25),
            TradeProposal::new().give(Player::Red, "Y", 40).give(Player::Blue, "X", 1),
        ],
        GameKind::Ultimatum => vec![
            TradeProposal::new().give(Player::Red, "Dollars", 50).give(Player::Blue, "Dollars", 0),
            TradeProposal::new().give(Player::Red, "Dollars", 20).give(Player::Blue, "Dollars", 0),
        ],
        GameKind::SellBuy => vec![
            TradeProposal::new().give(Player::Red, "X", 1).give(Player::Blue, "ZUP", 50),
            TradeProposal::new().give(Player::Red, "X", 1).give(Player::Blue, "ZUP", 65),
            TradeProposal::new().give(Player::Red, "X", 1).give(Player::Blue, "ZUP", 120),
        ],
    };
    moves.extend(trades.into_iter().map(Move::Propose));
    moves
}

struct Walk {
    games: usize,
    max_rounds_seen: u32,
}

fn check_state(cfg: &GameConfig, s: &GameState) -> Check {
    for r in &cfg.resources {
        let total: u64 = [Player::Red, Player::Blue].iter().map(|p| s.held(*p, r)).sum();
        let wiped = cfg.kind == GameKind::Ultimatum && s.outcome == Some(Outcome::Rejected);
        let expected = if wiped { 0 } else { cfg.total(r) };
        ensure!(total == expected, "{} total {r} = {total}, expected {expected}", cfg.kind);
    }
    for p in [Player::Red, Player::Blue] {
        ensure!(s.proposals[&p] <= cfg.proposal_limit, "{} {p} made {} proposals", cfg.kind, s.proposals[&p]);
    }
    ensure!(s.move_index <= cfg.max_rounds, "{} ran {} moves", cfg.kind, s.move_index);
    Ok(())
}

fn walk(cfg: &GameConfig, s: &GameState, moves: &[Move], acc: &mut Walk) -> Check {
    check_state(cfg, s)?;
    if s.is_over() {
        acc.games += 1;
        acc.max_rounds_seen = acc.max_rounds_seen.max(s.move_index);
        let outcome = s.outcome.unwrap();
        let u = |p| utility(cfg, outcome, &s.holdings, p);
        if outcome == Outcome::Accepted && cfg.kind != GameKind::ResourceExchange {
            ensure!(u(Player::Red) + u(Player::Blue) == 0.0, "{} accepted utilities do not sum to 0", cfg.kind);
        }
        if cfg.kind == GameKind::Ultimatum && outcome == Outcome::Rejected {
            ensure!((u(Player::Red), u(Player::Blue)) == (-50.0, -50.0), "ultimatum rejection utilities");
        }
        return Ok(());
    }
    let p = s.to_move();
    let mut legal = 0;
    for m in moves {
        if s.check(p, m, cfg).is_err() {
            continue;
        }
        legal += 1;
        let mut next = s.clone();
        next.apply(p, m.clone(), "", None, cfg).map_err(err)?;
        walk(cfg, &next, moves, acc)?;
    }
    ensure!(legal > 0, "{} dead end at move {}", cfg.kind, s.move_index);
    Ok(())
}

fn game_rules() -> Check {
    let start = Instant::now();
    let re = GameConfig::resource_exchange();
    let ul = GameConfig::ultimatum();
    let sb = GameConfig::sell_buy();
    ensure!((re.total("X"), re.total("Y")) == (30, 30), "resource-exchange totals");
    for (cfg, limit, cap) in [(&re, 3, 8), (&ul, 4, 8), (&sb, 4, 10)] {
        ensure!(cfg.proposal_limit == limit && cfg.max_rounds == cap, "{} limits", cfg.kind);
        let mut acc = Walk { games: 0, max_rounds_seen: 0 };
        walk(cfg, &GameState::new(cfg), &candidate_moves(cfg), &mut acc)?;
        // Sell-buy has no pass, so eight proposals leave one closing answer.
        let deepest = if cfg.kind == GameKind::SellBuy { cap - 1 } else { cap };
        ensure!(acc.max_rounds_seen == deepest, "{} deepest game ran {} moves", cfg.kind, acc.max_rounds_seen);
        ensure!(acc.games > 100, "{} only {} play-throughs", cfg.kind, acc.games);
    }

    // Limits are enforced, not only respected.
    let propose = |t: &TradeProposal| Move::Propose(t.clone());
    let t = TradeProposal::new().give(Player::Red, "X", 1).give(Player::Blue, "Y", 1);
    let mut s = GameState::new(&re);
    for _ in 0..3 {
        s.apply(Player::Red, propose(&t), "", None, &re).map_err(err)?;
        s.apply(Player::Blue, Move::Pass, "", None, &re).map_err(err)?;
    }
    ensure!(
        matches!(s.check(Player::Red, &propose(&t), &re), Err(MoveError::ProposalLimitExceeded(_))),
        "fourth resource-exchange proposal accepted"
    );
    s.apply(Player::Red, Move::Pass, "", None, &re).map_err(err)?;
    s.apply(Player::Blue, Move::Pass, "", None, &re).map_err(err)?;
    ensure!(s.outcome == Some(Outcome::NoDeal) && s.move_index == 8, "resource-exchange cap");

    let split = TradeProposal::new().give(Player::Red, "Dollars", 50).give(Player::Blue, "Dollars", 0);
    let mut s = GameState::new(&ul);
    for _ in 0..3 {
        s.apply(Player::Red, propose(&split), "", None, &ul).map_err(err)?;
        s.apply(Player::Blue, propose(&split), "", None, &ul).map_err(err)?;
    }
    s.apply(Player::Red, propose(&split), "", None, &ul).map_err(err)?;
    ensure!(
        matches!(s.check(Player::Blue, &propose(&split), &ul), Err(MoveError::ProposalLimitExceeded(_))),
        "BLUE proposed on move 4/4"
    );
    let mut rejected = s.clone();
    rejected.apply(Player::Blue, Move::Reject, "", None, &ul).map_err(err)?;
    let u = |cfg: &GameConfig, s: &GameState, p| utility(cfg, s.outcome.unwrap(), &s.holdings, p);
    ensure!(
        (u(&ul, &rejected, Player::Red), u(&ul, &rejected, Player::Blue)) == (-50.0, -50.0),
        "ultimatum rejection"
    );

    let sale = TradeProposal::new().give(Player::Red, "X", 1).give(Player::Blue, "ZUP", 50);
    let mut s = GameState::new(&sb);
    s.apply(Player::Red, propose(&sale), "", None, &sb).map_err(err)?;
    s.apply(Player::Blue, Move::Accept, "", None, &sb).map_err(err)?;
    ensure!((u(&sb, &s, Player::Red), u(&sb, &s, Player::Blue)) == (0.0, 0.0), "sell-buy at 50");
    let mut s = GameState::new(&sb);
    for _ in 0..4 {
        s.apply(Player::Red, propose(&sale), "", None, &sb).map_err(err)?;
        s.apply(Player::Blue, propose(&sale), "", None, &sb).map_err(err)?;
    }
    ensure!(
        matches!(s.check(Player::Red, &propose(&sale), &sb), Err(MoveError::ProposalLimitExceeded(_))),
        "fifth sell-buy proposal accepted"
    );

    // The same tie through the match driver.
    let mut red = ScriptedPolicy::lines([sb_line("PROPOSAL", "Player RED Gives X: 1 | Player BLUE Gives ZUP: 50")]);
    let mut blue = ScriptedPolicy::lines([sb_line("ACCEPT", "NONE")]);
    let r = run_match(&sb, &mut red, &mut blue, 0).map_err(err)?;
    ensure!(r.utilities[&Player::Red] == 0.0 && r.utilities[&Player::Blue] == 0.0 && r.winner.is_none(), "sell-buy tie");
    within(start, Duration::from_secs(10), "game-rule checks")
}

fn sb_line(answer: &str, trade: &str) -> String {
    format!(
        "<proposal count> 1 </proposal count><my resources> r </my resources><my goals> g </my goals>\
         <reason> r </reason><player answer> {answer} </player answer>\
         <newly proposed trade> {trade} </newly proposed trade><message> m </message>"
    )
}

fn ul_line(answer: &str, trade: &str) -> String {
    format!(
        "<my name> n </my name><move> 1 / 4 </move><my resources> r </my resources><reason> r </reason>\
         <player answer> {answer} </player answer><message> m </message>\
         <newly proposed trade> {trade} </newly proposed trade>"
    )
}

// ---------------------------------------------------------------- filter

fn filter_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let agents: Vec<AgentId> = ["a", "b", "c"].into_iter().map(AgentId::new).collect();
    for case in 0..200 {
        let eps = [0.0, 0.5, 0.9][rng.gen_range(0..3)];
        let n = rng.gen_range(0..6);
        let trajs: Vec<Trajectory> = (0..n)
            .map(|i| {
                let steps = (0..rng.gen_range(0..5))
                    .map(|_| {
                        let mut s = StepRecord::direct(
                            agents[rng.gen_range(0..3)].clone(),
                            "sys",
                            format!("prompt {}", rng.gen_range(0..3)),
                            format!("out {}", rng.gen_range(0..3)),
                            1,
                        );
                        s.superseded = rng.gen_bool(0.2);
                        s
                    })
                    .collect();
                let mut rewards = BTreeMap::new();
                for a in &agents {
                    if rng.gen_bool(0.8) {
                        rewards.insert(a.clone(), [0.0, 0.5, 0.7, 1.0, -1.0][rng.gen_range(0..5)]);
                    }
                }
                Trajectory {
                    problem_id: format!("p{i}"),
                    steps,
                    final_answer: None,
                    rewards,
                    detail: TrajectoryDetail::Pipeline,
                }
            })
            .collect();
        for a in &agents {
            let mut brute: Vec<(String, String, String)> = Vec::new();
            let mut seen: Vec<(String, String)> = Vec::new();
            for t in &trajs {
                let r = t.rewards.get(a);
                if !r.is_some_and(|r| *r > eps) {
                    continue;
                }
                for s in &t.steps {
                    if &s.agent_id != a || s.superseded {
                        continue;
                    }
                    let key = (s.rendered_prompt.clone(), s.output.clone());
                    if !seen.contains(&key) {
                        seen.push(key);
                        brute.push((t.problem_id.clone(), s.rendered_prompt.clone(), s.output.clone()));
                    }
                }
            }
            let got: Vec<_> = filter_good(&trajs, a, eps)
                .into_iter()
                .map(|e| (e.problem_id, e.user_prompt, e.output))
                .collect();
            ensure!(got == brute, "set {case}, agent {a}: {got:?} != {brute:?}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- augmentation

fn chain() -> Pipeline {
    let (g, agents) = TopologyPreset::ExpertChainPhysics.team(&ModelRef::scripted("base")).unwrap();
    Pipeline::new(g, agents).unwrap()
}

/// Terminal answers stay wrong unless the feedback try numbered `succeed_on`
/// reached the pipeline.
struct CountingBackend {
    feedback_calls: Mutex<u32>,
    succeed_on: Option<u32>,
}

impl Backend for CountingBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let text: String = request.messages.iter().map(|m| m.content.clone()).collect::<Vec<_>>().join("\n");
        let marker = self.succeed_on.map(|n| format!("FB#{n}#"));
        let hit = marker.as_ref().is_some_and(|m| text.contains(m.as_str()));
        Ok(match request.agent_id.as_str() {
            "feedback" => {
                let mut n = self.feedback_calls.lock().unwrap();
                *n += 1;
                format!("FB#{n}# check the units")
            }
            "summarizer" => format!("Answer: {}", if hit { "B" } else { "A" }),
            "rephraser" => "rephrased".into(),
            other => format!("{other} says {}", if hit { marker.unwrap() } else { "nothing".into() }),
        })
    }
}

fn budget_accounting() -> Check {
    let p = chain();
    let problem = ProblemInstance::new("p1", "How fast?", "B", TaskKind::MultipleChoice);
    let failed = {
        let gen = Generator::new().with_scripted(ScriptedBackend::from_pairs([
            ("physicist", "orig"),
            ("mathematician", "orig"),
            ("summarizer", "Answer: A"),
        ]));
        p.execute(&gen, &problem, 1).map_err(err)?
    };
    let model = ModelRef::scripted("base");
    let (fb, reph) = (feedback_agent(&model), rephrase_agent(&model));
    let run = |budgets: AugmentBudgets, target: &str, succeed_on: Option<u32>| -> Result<(AugmentOutcome, usize), String> {
        let gen = Generator::new().with_backend(
            BackendKind::Scripted,
            Arc::new(CountingBackend { feedback_calls: Mutex::new(0), succeed_on }),
        );
        let aug = Augmenter { pipeline: &p, feedback: &fb, rephraser: &reph, budgets };
        let out = augment_failed(&aug, &gen, &problem, &failed, &target.into(), 1).map_err(err)?;
        Ok((out, gen.log().len()))
    };
    for max_f in 1..=3u32 {
        for max_re in 1..=3u32 {
            for (target, downstream) in [("physicist", 2u32), ("mathematician", 1), ("summarizer", 0)] {
                let (out, calls) = run(AugmentBudgets::new(1, max_f, max_re), target, None)?;
                let bound = max_f * (1 + max_re * (1 + downstream));
                ensure!(!out.is_success(), "({max_f},{max_re}) {target} succeeded");
                ensure!(calls as u32 == bound, "({max_f},{max_re}) {target}: {calls} calls, bound {bound}");
            }
        }
    }
    // Success on feedback try 2, regeneration try 1: one full failed feedback
    // try, then feedback, target, two downstream agents and the rephrase.
    let (out, calls) = run(AugmentBudgets::new(1, 3, 3), "physicist", Some(2))?;
    let Some(note) = out.note() else {
        return Err("expected success on feedback try 2".into());
    };
    ensure!(note.attempts == (2, 1), "attempts {:?}", note.attempts);
    ensure!(calls == (1 + 3 * 3) + (1 + 1 + 2 + 1), "early exit issued {calls} calls");
    // The whole augmenter stops at its first successful target.
    let gen = Generator::new().with_backend(
        BackendKind::Scripted,
        Arc::new(CountingBackend { feedback_calls: Mutex::new(0), succeed_on: Some(1) }),
    );
    let aug = Augmenter { pipeline: &p, feedback: &fb, rephraser: &reph, budgets: AugmentBudgets::new(1, 3, 3) };
    ensure!(aug.augment(&gen, &problem, &failed, 1).map_err(err)?.is_success(), "augmenter failed");
    ensure!(gen.log().len() == 5, "augmenter issued {} calls after success", gen.log().len());
    Ok(())
}

fn propagation() -> Check {
    let p = chain();
    let problem = ProblemInstance::new("p1", "How fast?", "B", TaskKind::MultipleChoice);
    let originals: BTreeMap<AgentId, String> = [
        ("physicist", "PHY_ORIG_S"),
        ("mathematician", "MATH_ORIG_S"),
        ("summarizer", "Answer: A"),
    ]
    .into_iter()
    .map(|(a, o)| (AgentId::new(a), o.to_string()))
    .collect();

    // Regenerating the physicist re-runs both descendants on new inputs.
    let gen = Generator::new().with_scripted(ScriptedBackend::from_pairs([
        ("mathematician", "MATH_NEW_S"),
        ("summarizer", "Answer: B"),
    ]));
    let prop = propagate_downstream(&gen, &p, &problem, &"physicist".into(), "PHY_NEW_S", &originals, 1).map_err(err)?;
    let calls = gen.log().snapshot();
    ensure!(calls.len() == 2, "{} calls", calls.len());
    let (math, summ) = (calls[0].prompt_text(), calls[1].prompt_text());
    ensure!(calls[0].agent_id.as_str() == "mathematician", "order");
    ensure!(math.contains("PHY_NEW_S") && !math.contains("PHY_ORIG_S"), "mathematician inputs");
    ensure!(
        summ.contains("PHY_NEW_S") && summ.contains("MATH_NEW_S") && !summ.contains("ORIG_S"),
        "summarizer inputs"
    );
    ensure!(prop.final_answer.as_ref().map(|a| a.token()) == Some("B".into()), "final answer");

    // Regenerating the mathematician leaves the physicist's original in place.
    let gen = Generator::new().with_scripted(ScriptedBackend::from_pairs([("summarizer", "Answer: B")]));
    propagate_downstream(&gen, &p, &problem, &"mathematician".into(), "MATH_NEW_S", &originals, 1).map_err(err)?;
    let calls = gen.log().snapshot();
    ensure!(calls.len() == 1 && calls[0].agent_id.as_str() == "summarizer", "only the summarizer re-runs");
    let summ = calls[0].prompt_text();
    ensure!(
        summ.contains("PHY_ORIG_S") && summ.contains("MATH_NEW_S") && !summ.contains("MATH_ORIG_S"),
        "summarizer inputs after mathematician regeneration"
    );

    // Stored augmented trajectory: rephrased target, propagated descendants.
    let gen = Generator::new().with_scripted(ScriptedBackend::from_pairs([
        ("feedback", "FB_S"),
        ("physicist", "PHY_NEW_S"),
        ("mathematician", "MATH_NEW_S"),
        ("summarizer", "Answer: B"),
        ("rephraser", "PHY_DIRECT_S"),
    ]));
    let failed = Trajectory {
        problem_id: "p1".into(),
        steps: originals
            .iter()
            .map(|(a, o)| StepRecord::direct(a.clone(), "sys", format!("prompt for {a}"), o.clone(), 1))
            .collect(),
        final_answer: None,
        rewards: BTreeMap::new(),
        detail: TrajectoryDetail::Pipeline,
    };
    let model = ModelRef::scripted("base");
    let aug = Augmenter {
        pipeline: &p,
        feedback: &feedback_agent(&model),
        rephraser: &rephrase_agent(&model),
        budgets: AugmentBudgets::new(1, 1, 1),
    };
    let AugmentOutcome::Success { trajectory, .. } = augment_failed(&aug, &gen, &problem, &failed, &"physicist".into(), 1).map_err(err)? else {
        return Err("augmentation did not verify".into());
    };
    let outs: Vec<&str> = trajectory.steps.iter().map(|s| s.output.as_str()).collect();
    ensure!(outs == ["PHY_DIRECT_S", "MATH_NEW_S", "Answer: B"], "stored outputs {outs:?}");
    ensure!(trajectory.steps[1].rendered_prompt.contains("PHY_NEW_S"), "stored mathematician prompt");
    ensure!(trajectory.steps.iter().all(|s| s.provenance == Provenance::Augmented), "provenance");
    Ok(())
}

// ---------------------------------------------------------------- information flow

fn information_flow() -> Check {
    let mut logs = Vec::new();
    let model = ModelRef::scripted("base");
    for (preset, kind) in [
        (TopologyPreset::ExpertChainPhysics, TaskKind::MultipleChoice),
        (TopologyPreset::ExpertChainChemistry, TaskKind::MultipleChoice),
        (TopologyPreset::AnalystSolver, TaskKind::YesNoMaybe),
    ] {
        let (ps, golds) = common::problems(6, kind);
        let gen = common::generator(common::oracle(kind, golds, &[2, 4, 6], &[6]));
        let (g, agents) = preset.team(&model).unwrap();
        let pipeline = Pipeline::new(g, agents).map_err(err)?;
        let (fb, reph) = (feedback_agent(&model), rephrase_agent(&model));
        let aug = Augmenter { pipeline: &pipeline, feedback: &fb, rephraser: &reph, budgets: AugmentBudgets::default() };
        let reward = RewardConfig::for_setting(Setting::ProblemSolving);
        let mut augmented = 0;
        for p in &ps {
            let mut t = pipeline.execute(&gen, p, 1).map_err(err)?;
            score(&mut t, Some(p), &reward).map_err(err)?;
            if t.reward(pipeline.terminal()) == Some(0.0) && aug.augment(&gen, p, &t, 1).map_err(err)?.is_success() {
                augmented += 1;
            }
        }
        ensure!(augmented == 2, "{preset}: {augmented} augmented");
        logs.push(gen);
    }

    let (ps, golds) = common::problems(6, TaskKind::YesNoMaybe);
    let gen = common::generator(common::oracle(TaskKind::YesNoMaybe, golds, &[2, 4, 6], &[6]));
    let agents = actor_critic_agents(&model);
    let reph = rephrase_agent(&model);
    let reward = RewardConfig::for_setting(Setting::ActorCritic);
    for p in &ps {
        let mut t = run_actor_critic(&gen, &agents, p, ActorCriticBudget::default(), 1).map_err(err)?.trajectory;
        score(&mut t, Some(p), &reward).map_err(err)?;
        if t.reward(&agents.actor.agent_id) == Some(0.0) {
            augment_actor_critic(&gen, &agents, &reph, p, &t, AugmentBudgets::default(), 1).map_err(err)?;
        }
    }
    logs.push(gen);

    let mut feedback_saw_gold = 0;
    let mut checked = 0;
    for gen in &logs {
        for call in gen.log().snapshot() {
            checked += 1;
            let leaked = (1..=6).any(|i| call.prompt_text().contains(&common::gold_sentinel(i)));
            if call.agent_id.as_str() == "feedback" {
                feedback_saw_gold += usize::from(leaked);
            } else {
                ensure!(!leaked, "{} saw a gold sentinel", call.agent_id);
            }
        }
    }
    ensure!(feedback_saw_gold > 0, "feedback agent never received gold");
    ensure!(checked > 100, "only {checked} calls checked");
    Ok(())
}

// ---------------------------------------------------------------- end to end

/// Deterministic provider whose result names encode the lineage.
struct LineageProvider {
    fail_agent: Option<(u32, &'static str)>,
}

impl FineTuneProvider for LineageProvider {
    fn name(&self) -> &'static str {
        "lineage"
    }

    fn run(&self, mut job: FineTuneJob) -> Result<FineTuneJob, TrainError> {
        let depth = job.base_model.model_name.matches('+').count() as u32 + 1;
        if self.fail_agent == Some((depth, job.agent_id.as_str())) {
            job.status = JobStatus::Failed;
            job.message = Some("injected failure".into());
            return Ok(job);
        }
        job.status = JobStatus::Succeeded;
        job.result_model = Some(format!("{}+{}", job.base_model.model_name, job.agent_id));
        Ok(job)
    }
}

fn e2e_trainer(run_dir: &Path, provider: Arc<dyn FineTuneProvider>) -> (Trainer, Generator) {
    let (ps, golds) = common::problems(8, TaskKind::MultipleChoice);
    let gen = common::generator(common::oracle(TaskKind::MultipleChoice, golds, &[2, 4, 6, 8], &[8]));
    let model = ModelRef::scripted("base");
    let (g, agents) = TopologyPreset::ExpertChainPhysics.team(&model).unwrap();
    let workload = Workload::Pipeline {
        pipeline: Pipeline::new(g, agents).unwrap(),
        feedback: feedback_agent(&model),
        rephraser: rephrase_agent(&model),
    };
    let trainer = Trainer::new(workload, ps, gen.clone(), provider, run_dir).with_workers(4);
    (trainer, gen)
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let root = tempfile::tempdir().map_err(err)?;

    // Uninterrupted run with the null provider.
    let dir = root.path().join("null");
    let (trainer, gen) = e2e_trainer(&dir, Arc::new(NullProvider));
    let reports = trainer.run(2).map_err(err)?;
    ensure!(reports.len() == 2, "{} reports", reports.len());
    for r in &reports {
        let phys = &r.per_agent[&AgentId::new("physicist")];
        ensure!(
            (phys.direct, phys.augmented, phys.unsolved) == (4, 3, 1),
            "iteration {} counts {:?}",
            r.iteration,
            phys
        );
        for a in ["physicist", "mathematician", "summarizer"] {
            let path = dataset_file(&trainer.library_root(), r.iteration, &a.into());
            let n = validate_chat_jsonl(&path).map_err(err)?;
            ensure!(n == r.per_agent[&AgentId::new(a)].examples && n > 0, "{} has {n} records", path.display());
        }
    }
    let reg = ModelRegistry::load(&trainer.registry_path()).map_err(err)?;
    ensure!(reg.latest() == 2 && reg.agents().len() == 3, "registry {reg:?}");
    for t in [1u32, 2] {
        ensure!(reg.models(t).is_some_and(|m| m.len() == 3), "iteration {t} incomplete");
    }
    ensure!(!trainer.checkpoint_path().exists(), "checkpoint left behind");
    for call in gen.log().snapshot() {
        if call.agent_id.as_str() != "feedback" {
            ensure!(!call.prompt_text().contains("GOLDSENTINEL"), "{} saw gold during training", call.agent_id);
        }
    }

    // Reference lineage run.
    let dir = root.path().join("reference");
    let (trainer, _) = e2e_trainer(&dir, Arc::new(LineageProvider { fail_agent: None }));
    trainer.run(2).map_err(err)?;
    let reference = std::fs::read_to_string(trainer.registry_path()).map_err(err)?;
    ensure!(reference.contains("base+physicist+physicist"), "lineage missing");

    // Killed after exporting iteration 1, then resumed.
    let dir = root.path().join("killed");
    let (trainer, _) = e2e_trainer(&dir, Arc::new(LineageProvider { fail_agent: None }));
    match trainer.with_halt_after_export(true).run(2) {
        Err(TrainError::Halted(1)) => {}
        other => return Err(format!("expected a halt at iteration 1, got {other:?}")),
    }
    ensure!(ModelRegistry::load(&dir.join("registry.json")).map_err(err)?.latest() == 0, "halt touched the registry");
    ensure!(dir.join("checkpoint.json").exists(), "no checkpoint after halt");

    // Fine-tuning fails mid-iteration 2: the registry keeps only whole iterations.
    let (trainer, _) = e2e_trainer(&dir, Arc::new(LineageProvider { fail_agent: Some((2, "mathematician")) }));
    match trainer.run(2) {
        Err(TrainError::FineTuneFailed { agent, .. }) if agent.as_str() == "mathematician" => {}
        other => return Err(format!("expected a fine-tune failure, got {other:?}")),
    }
    let partial = ModelRegistry::load(&trainer.registry_path()).map_err(err)?;
    ensure!(partial.latest() == 1 && partial.models(2).is_none(), "partial iteration recorded");
    ensure!(trainer.checkpoint_path().exists(), "checkpoint dropped after failure");

    let (trainer, _) = e2e_trainer(&dir, Arc::new(LineageProvider { fail_agent: None }));
    trainer.run(2).map_err(err)?;
    let resumed = std::fs::read_to_string(trainer.registry_path()).map_err(err)?;
    ensure!(resumed == reference, "resumed registry differs:\n{resumed}\nvs\n{reference}");
    within(start, Duration::from_secs(30), "end-to-end run")
}

// ---------------------------------------------------------------- metrics

fn metrics() -> Check {
    // Four yes/no problems: two right and confirmed, one fixed after critique,
    // one wrong throughout.
    let (ps, golds) = common::problems(4, TaskKind::YesNoMaybe);
    let model = ModelRef::scripted("base");
    let workload = Workload::ActorCritic {
        agents: actor_critic_agents(&model),
        rephraser: rephrase_agent(&model),
        budget: ActorCriticBudget::default(),
    };
    let gen = common::generator(common::oracle(TaskKind::YesNoMaybe, golds, &[3, 4], &[4]));
    let EvalReport::ActorCritic(m) = evaluate(&workload, &gen, &ps, 2).map_err(err)? else {
        return Err("wrong report kind".into());
    };
    ensure!((m.total, m.true_positive, m.overall_correct) == (4, 2, 3), "counts {m:?}");
    ensure!(m.tp_percent() == 50.0 && m.overall_percent() == 75.0, "percentages");

    let (ps, golds) = common::problems(8, TaskKind::MultipleChoice);
    let (g, agents) = TopologyPreset::AnalystSolver.team(&model).unwrap();
    let workload = Workload::Pipeline {
        pipeline: Pipeline::new(g, agents).unwrap(),
        feedback: feedback_agent(&model),
        rephraser: rephrase_agent(&model),
    };
    let gen = common::generator(common::oracle(TaskKind::MultipleChoice, golds, &[1, 2, 3], &[]));
    let EvalReport::ProblemSolving(a) = evaluate(&workload, &gen, &ps, 3).map_err(err)? else {
        return Err("wrong report kind".into());
    };
    ensure!((a.correct, a.total) == (5, 8) && a.percent() == 62.5, "accuracy {a:?}");

    // Ultimatum: RED keeps 70, RED keeps 40, BLUE rejects, even split.
    let ul = GameConfig::ultimatum();
    let offer = |keep: u64| ul_line("NONE", &format!("Player RED Gives Dollars: {} | Player BLUE Gives Dollars: 0", 100 - keep));
    let mut score = PairingScore::new("red vs blue");
    for (red, blue) in [
        (offer(70), ul_line("ACCEPT", "NONE")),
        (offer(40), ul_line("ACCEPT", "NONE")),
        (offer(90), ul_line("REJECT", "NONE")),
        (offer(50), ul_line("ACCEPT", "NONE")),
    ] {
        let r = run_match(&ul, &mut ScriptedPolicy::lines([red]), &mut ScriptedPolicy::lines([blue]), 0).map_err(err)?;
        score.record(&r);
    }
    ensure!((score.games, score.decisive, score.wins_p1, score.wins_p2) == (4, 2, 1, 1), "tallies {score:?}");
    ensure!(score.win_rate_p1() == Some(50.0) && score.win_rate_p2() == Some(50.0), "win rates");
    // RED: 20 - 10 - 50 + 0; BLUE: -20 + 10 - 50 + 0.
    ensure!(score.mean_payoff_p1() == Some(-10.0) && score.mean_payoff_p2() == Some(-15.0), "payoffs {score:?}");
    Ok(())
}

// ---------------------------------------------------------------- live

fn live_smoke() -> Result<Verdict, String> {
    let Some(cfg) = RemoteConfig::from_env() else {
        return Ok(Verdict::Skip("API_BASE_URL / API_KEY not set".into()));
    };
    if std::env::var("API_KEY").is_err() {
        return Ok(Verdict::Skip("API_KEY not set".into()));
    }
    let model_name = std::env::var("LIVE_MODEL").unwrap_or_else(|_| "gpt-4o-mini".into());
    let model = ModelRef::remote(model_name.clone());
    let gen = Generator::new().with_remote(RemoteBackend::new(cfg).map_err(err)?);

    let (g, agents) = TopologyPreset::AnalystSolver.team(&model).unwrap();
    let pipeline = Pipeline::new(g, agents).map_err(err)?;
    let problem = ProblemInstance::new(
        "live-1",
        "Does regular aerobic exercise lower resting blood pressure in adults with hypertension?",
        "yes",
        TaskKind::YesNoMaybe,
    )
    .with_context("A randomized trial of 120 adults with stage 1 hypertension found that 12 weeks of aerobic training reduced systolic pressure by 8 mmHg compared with controls.");
    let t = pipeline.execute(&gen, &problem, 0).map_err(err)?;
    ensure!(t.steps.len() == 2, "analyst-solver produced {} steps", t.steps.len());

    let re = GameConfig::resource_exchange();
    let mut red = LlmPolicy::new(gen.clone(), "player-red", model.clone(), &re, Player::Red).map_err(err)?;
    let mut blue = LlmPolicy::new(gen.clone(), "player-blue", model, &re, Player::Blue).map_err(err)?;
    let r = run_match(&re, &mut red, &mut blue, 0).map_err(|e: GameError| e.to_string())?;
    for turn in &r.transcript {
        ensure!(turn.message.is_some(), "move {} has no parsed message", turn.move_index);
    }
    Ok(Verdict::Pass)
}
