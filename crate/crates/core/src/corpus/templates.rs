//! Code templates for benign and fraudulent click handlers.

use std::fmt::Write;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{NoiseConfig, SampleKind, Strategy};

#[derive(Debug, Clone, Copy)]
enum Axis {
    X,
    Y,
}

impl Axis {
    fn getter(self) -> &'static str {
        match self {
            Axis::X => "MotionEvent.getX",
            Axis::Y => "MotionEvent.getY",
        }
    }

    fn raw_getter(self) -> &'static str {
        match self {
            Axis::X => "MotionEvent.getRawX",
            Axis::Y => "MotionEvent.getRawY",
        }
    }

    fn size(self) -> &'static str {
        match self {
            Axis::X => "View.getWidth",
            Axis::Y => "View.getHeight",
        }
    }

    fn origin(self) -> &'static str {
        match self {
            Axis::X => "View.getLeft",
            Axis::Y => "View.getTop",
        }
    }

    fn key(self) -> &'static str {
        match self {
            Axis::X => "click_x",
            Axis::Y => "click_y",
        }
    }
}

#[derive(Debug, Clone)]
enum Guard {
    None,
    /// Skip clicks that arrive too soon after the previous one.
    Debounce,
    /// Only forward a specific action of the given event variable.
    ActionCheck(String),
    NetworkCheck,
    /// Debounce applied only while online.
    OnlineDebounce,
    PrefFlag,
    /// Random sampling of a small share of clicks.
    Sample,
    /// Fire on a random draw; `draws` random calls feed the comparison.
    RandomGate {
        draws: usize,
    },
    /// Fire when an existing variable crosses a literal.
    OnVar(String, &'static str),
    /// Remote switch, optionally with a remote schedule and click quota.
    ServerFlag {
        with_clock: bool,
        with_quota: bool,
    },
}

struct Method {
    name: String,
    params: Vec<String>,
    body: Vec<String>,
}

const AD_LIBRARIES: [&str; 8] = [
    "com.google.android.gms.ads",
    "com.facebook.ads",
    "com.applovin.sdk",
    "com.unity3d.ads",
    "com.mopub.mobileads",
    "com.inmobi.ads",
    "com.vungle.warren",
    "com.ads.sdk",
];

const OTHER_LIBRARIES: [&str; 5] = [
    "com.squareup.okhttp3",
    "com.google.gson",
    "androidx.appcompat",
    "io.reactivex",
    "com.bumptech.glide",
];

/// name, class, width, height, label
const AD_VIEWS: [(&str, &str, u32, u32, &str); 6] = [
    ("adView", "com.google.android.gms.ads.AdView", 320, 50, "Ad"),
    ("bannerAd", "android.widget.FrameLayout", 320, 50, ""),
    ("sponsorSlot", "android.view.View", 320, 100, ""),
    ("promoFrame", "com.facebook.ads.AdView", 300, 250, ""),
    ("interstitialView", "android.widget.FrameLayout", 360, 640, "Close"),
    ("nativeAdContainer", "com.ads.NativeAdView", 328, 180, "Sponsored"),
];

const DECOY_VIEWS: [(&str, &str, u32, u32, &str); 4] = [
    ("menuButton", "android.widget.Button", 120, 48, "Menu"),
    ("titleText", "android.widget.TextView", 240, 32, "Welcome"),
    ("playButton", "android.widget.ImageButton", 96, 96, ""),
    ("headerImage", "android.widget.ImageView", 280, 160, ""),
];

const CLASSES: [&str; 6] = [
    "MainActivity",
    "GameActivity",
    "SplashActivity",
    "FeedFragment",
    "AdController",
    "PlayerView",
];

const VENDORS: [&str; 6] = ["acme", "pixel", "lumen", "orbit", "tiny", "north"];
const APPS: [&str; 6] = ["flashlight", "puzzle", "weather", "notes", "runner", "radio"];

pub(super) struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    noise: &'a NoiseConfig,
    class: String,
    ad_view: String,
    decoys: Vec<String>,
    methods: Vec<Method>,
    counter: usize,
    /// Server-supplied coordinates are ratios of the view size rather than pixels.
    server_ratio: bool,
}

fn weighted<'t, T>(rng: &mut ChaCha8Rng, items: &'t [(u32, T)]) -> &'t T {
    &items.choose_weighted(rng, |i| i.0).expect("non-empty weights").1
}

impl<'a> Builder<'a> {
    fn fresh(&mut self, stem: &str) -> String {
        self.counter += 1;
        format!("{stem}{}", self.counter)
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random_bool(p)
    }

    fn qualified(&self, method: &str) -> String {
        format!("{}.{}", self.class, method)
    }

    fn add_method(&mut self, name: String, params: &[&str], body: Vec<String>) {
        self.methods.push(Method {
            name,
            params: params.iter().map(|p| p.to_string()).collect(),
            body,
        });
    }

    /// Straight-line or self-contained code that no slice depends on.
    fn dead_code(&mut self, body: &mut Vec<String>, budget: usize) {
        let mut left = budget;
        while left > 0 {
            match self.rng.random_range(0..6) {
                0 => {
                    let a = self.fresh("tmp");
                    let k = self.rng.random_range(1..100);
                    body.push(format!("{a} = const {k}"));
                    left -= 1;
                    if left > 0 {
                        let b = self.fresh("tmp");
                        body.push(format!("{b} = mul {a} 3"));
                        left -= 1;
                    }
                }
                1 => {
                    let a = self.fresh("count");
                    body.push(format!("{a} = call Prefs.getInt(\"launches\")"));
                    body.push(format!("call Log.d(\"stats\", {a})"));
                    left = left.saturating_sub(2);
                }
                2 if left >= 4 => {
                    let a = self.fresh("state");
                    let l = self.fresh("Lskip");
                    body.push(format!("{a} = call Prefs.getInt(\"theme\")"));
                    body.push(format!("if {a} == 0 goto {l}"));
                    body.push(format!("call Ui.setTheme({a})"));
                    body.push(format!("label {l}"));
                    left -= 4;
                }
                3 => {
                    let a = self.fresh("seed");
                    body.push(format!("{a} = call Random.nextInt(8)"));
                    body.push(format!("call Ui.shuffleTiles({a})"));
                    left = left.saturating_sub(2);
                }
                4 => {
                    let a = self.fresh("now");
                    body.push(format!("{a} = call SystemClock.uptimeMillis()"));
                    left -= 1;
                }
                _ => {
                    let name = self.fresh("refreshUi");
                    let v = self.fresh("n");
                    self.add_method(
                        name.clone(),
                        &["k"],
                        vec![format!("{v} = add k 1"), format!("call Log.d(\"ui\", {v})")],
                    );
                    body.push(format!("call {}(2)", self.qualified(&name)));
                    left -= 1;
                }
            }
        }
    }

    fn dead_budget(&mut self) -> usize {
        if self.noise.max_dead_statements == 0 {
            0
        } else {
            self.rng.random_range(0..=self.noise.max_dead_statements)
        }
    }

    fn wrapper_depth(&mut self) -> usize {
        if self.noise.max_wrapper_depth == 0 || self.chance(0.6) {
            0
        } else {
            self.rng.random_range(1..=self.noise.max_wrapper_depth)
        }
    }

    /// Either inlines `lines` into `body` or moves them into a chain of
    /// helper methods taking `params`; returns the variable holding the value.
    fn place(&mut self, body: &mut Vec<String>, mut lines: Vec<String>, result: String, params: &[&str]) -> String {
        let depth = self.wrapper_depth();
        if depth == 0 {
            body.append(&mut lines);
            return result;
        }
        let stem = if params.is_empty() { "compute" } else { "readTouch" };
        let names: Vec<String> = (0..depth).map(|_| self.fresh(stem)).collect();
        lines.push(format!("return {result}"));
        self.add_method(names[depth - 1].clone(), params, lines);
        let args = params.join(", ");
        for i in (0..depth - 1).rev() {
            let r = self.fresh("r");
            let callee = self.qualified(&names[i + 1]);
            self.add_method(
                names[i].clone(),
                params,
                vec![format!("{r} = call {callee}({args})"), format!("return {r}")],
            );
        }
        let v = self.fresh("v");
        body.push(format!("{v} = call {}({args})", self.qualified(&names[0])));
        v
    }

    fn benign_coord(&mut self, body: &mut Vec<String>, axis: Axis, allow_fixed: bool) -> String {
        let view = self.ad_view.clone();
        let mut lines = Vec::new();
        let kinds: &[(u32, u8)] = if allow_fixed {
            &[(30, 0), (15, 1), (8, 2), (10, 3), (10, 4), (6, 5), (12, 6), (22, 7)]
        } else {
            &[(30, 0), (15, 1), (8, 2), (10, 3), (10, 4), (12, 6)]
        };
        let result = match *weighted(self.rng, kinds) {
            0 => {
                let g = self.fresh("g");
                lines.push(format!("{g} = call e {}()", axis.getter()));
                g
            }
            1 => {
                let (r, o, c) = (self.fresh("raw"), self.fresh("org"), self.fresh("c"));
                lines.push(format!("{r} = call e {}()", axis.raw_getter()));
                lines.push(format!("{o} = call {view} {}()", axis.origin()));
                lines.push(format!("{c} = sub {r} {o}"));
                c
            }
            2 => {
                let (g, s, ok) = (self.fresh("g"), self.fresh("size"), self.fresh("Lin"));
                lines.push(format!("{g} = call e {}()", axis.getter()));
                lines.push(format!("{s} = call {view} {}()", axis.size()));
                lines.push(format!("if {g} <= {s} goto {ok}"));
                lines.push(format!("{g} = copy {s}"));
                lines.push(format!("label {ok}"));
                g
            }
            3 => {
                let (g, d, c) = (self.fresh("g"), self.fresh("density"), self.fresh("c"));
                lines.push(format!("{g} = call e {}()", axis.getter()));
                lines.push(format!("{d} = call Display.getDensity()"));
                lines.push(format!("{c} = div {g} {d}"));
                c
            }
            4 => {
                let (g, c) = (self.fresh("g"), self.fresh("c"));
                let off = ["0.5", "1", "2"].choose(self.rng).unwrap();
                lines.push(format!("{g} = call e {}()", axis.getter()));
                lines.push(format!("{c} = add {g} {off}"));
                c
            }
            5 => {
                let (s, c) = (self.fresh("size"), self.fresh("mid"));
                lines.push(format!("{s} = call {view} {}()", axis.size()));
                lines.push(format!("{c} = div {s} 2"));
                c
            }
            7 => {
                // swipe-style forwarding keeps one axis on a fixed track
                let c = self.fresh("track");
                let v = self.rng.random_range(8..120);
                lines.push(format!("{c} = const {v}"));
                c
            }
            _ => {
                let (g, c) = (self.fresh("g"), self.fresh("c"));
                lines.push(format!("{g} = call e {}()", axis.getter()));
                lines.push(format!("{c} = copy {g}"));
                c
            }
        };
        // centered coordinates ignore the event and take no parameters
        let uses_event = lines.iter().any(|l| l.contains(" call e "));
        self.place(body, lines, result, if uses_event { &["e"] } else { &[] })
    }

    fn random_scaled(&mut self, lines: &mut Vec<String>, axis: Axis) -> String {
        let view = self.ad_view.clone();
        let (r, s, c) = (self.fresh("r"), self.fresh("size"), self.fresh("p"));
        let api = ["Random.nextFloat", "Random.nextDouble", "Math.random"]
            .choose(self.rng)
            .unwrap();
        lines.push(format!("{r} = call {api}()"));
        lines.push(format!("{s} = call {view} {}()", axis.size()));
        lines.push(format!("{c} = mul {r} {s}"));
        c
    }

    fn fraud_coord(&mut self, body: &mut Vec<String>, axis: Axis, strategy: Strategy, event: &str) -> String {
        let view = self.ad_view.clone();
        let mut lines = Vec::new();
        let mut params: &[&str] = &[];
        let result = match strategy {
            Strategy::RandomCoords => match self.rng.random_range(0..10) {
                0..=5 => self.random_scaled(&mut lines, axis),
                _ => {
                    let c = self.random_scaled(&mut lines, axis);
                    let m = self.fresh("m");
                    let margin = ["4", "8", "12"].choose(self.rng).unwrap();
                    lines.push(format!("{m} = add {c} {margin}"));
                    m
                }
            },
            Strategy::RandomTiming if event == "e" => {
                // replay the user's own touch at a moment of the app's choosing
                let g = self.fresh("g");
                lines.push(format!("{g} = call e {}()", axis.getter()));
                params = &["e"];
                g
            }
            Strategy::RandomTiming => match self.rng.random_range(0..10) {
                0..=4 => {
                    let (s, c) = (self.fresh("size"), self.fresh("mid"));
                    lines.push(format!("{s} = call {view} {}()", axis.size()));
                    lines.push(format!("{c} = div {s} 2"));
                    c
                }
                5..=7 => {
                    let c = self.fresh("fixed");
                    let v = self.rng.random_range(20..300);
                    lines.push(format!("{c} = const {v}"));
                    c
                }
                _ => {
                    let (s, c) = (self.fresh("size"), self.fresh("p"));
                    let frac = ["0.3", "0.5", "0.7"].choose(self.rng).unwrap();
                    lines.push(format!("{s} = call {view} {}()", axis.size()));
                    lines.push(format!("{c} = mul {s} {frac}"));
                    c
                }
            },
            Strategy::FollowUserClick => {
                if event == "e" {
                    // perturb the real touch point
                    let (g, n, d, c) = (self.fresh("g"), self.fresh("n"), self.fresh("d"), self.fresh("c"));
                    let spread = ["6.0", "8.0", "15.0"].choose(self.rng).unwrap();
                    lines.push(format!("{g} = call e {}()", axis.getter()));
                    lines.push(format!("{n} = call Random.nextGaussian()"));
                    lines.push(format!("{d} = mul {n} {spread}"));
                    lines.push(format!("{c} = add {g} {d}"));
                    params = &["e"];
                    c
                } else {
                    self.random_scaled(&mut lines, axis)
                }
            }
            Strategy::ServerConfigured => {
                let f = self.fresh("cfg");
                lines.push(format!("{f} = call Network.readResponse(\"{}\")", axis.key()));
                if self.server_ratio {
                    let (sz, c) = (self.fresh("size"), self.fresh("p"));
                    lines.push(format!("{sz} = call {view} {}()", axis.size()));
                    lines.push(format!("{c} = mul {f} {sz}"));
                    c
                } else {
                    f
                }
            }
        };
        self.place(body, lines, result, params)
    }

    fn guard_lines(&mut self, guard: &Guard, skip: &str) -> Vec<String> {
        let mut out = Vec::new();
        match guard {
            Guard::None => {}
            Guard::Debounce => {
                let (now, prev, dt) = (self.fresh("now"), self.fresh("prev"), self.fresh("dt"));
                out.push(format!("{now} = call System.currentTimeMillis()"));
                out.push(format!("{prev} = call Prefs.getLong(\"last_click\")"));
                out.push(format!("{dt} = sub {now} {prev}"));
                out.push(format!("if {dt} < 300 goto {skip}"));
            }
            Guard::ActionCheck(ev) => {
                let a = self.fresh("action");
                out.push(format!("{a} = call {ev} MotionEvent.getAction()"));
                out.push(format!("if {a} != 1 goto {skip}"));
            }
            Guard::NetworkCheck => {
                let n = self.fresh("net");
                out.push(format!("{n} = call Connectivity.getNetworkState()"));
                out.push(format!("if {n} == 0 goto {skip}"));
            }
            Guard::OnlineDebounce => {
                out.extend(self.guard_lines(&Guard::NetworkCheck, skip));
                out.extend(self.guard_lines(&Guard::Debounce, skip));
            }
            Guard::PrefFlag => {
                let f = self.fresh("enabled");
                out.push(format!("{f} = call Prefs.getBoolean(\"forward_clicks\")"));
                out.push(format!("if {f} == false goto {skip}"));
            }
            Guard::Sample => {
                let r = self.fresh("roll");
                out.push(format!("{r} = call Random.nextInt(100)"));
                out.push(format!("if {r} >= 5 goto {skip}"));
            }
            Guard::RandomGate { draws } => {
                let mut acc = self.fresh("roll");
                let bound = [10, 20, 100].choose(self.rng).unwrap();
                out.push(format!("{acc} = call Random.nextInt({bound})"));
                for _ in 1..*draws {
                    let (r, s) = (self.fresh("roll"), self.fresh("sum"));
                    out.push(format!("{r} = call Random.nextInt({bound})"));
                    out.push(format!("{s} = add {acc} {r}"));
                    acc = s;
                }
                let cut = bound / 3;
                out.push(format!("if {acc} > {cut} goto {skip}"));
            }
            Guard::OnVar(v, lit) => out.push(format!("if {v} < {lit} goto {skip}")),
            Guard::ServerFlag { with_clock, with_quota } => {
                let f = self.fresh("flag");
                out.push(format!("{f} = call Network.readResponse(\"enabled\")"));
                out.push(format!("if {f} == 0 goto {skip}"));
                if *with_clock {
                    let (now, due) = (self.fresh("now"), self.fresh("due"));
                    out.push(format!("{now} = call System.currentTimeMillis()"));
                    out.push(format!("{due} = call Network.readResponse(\"next_click\")"));
                    out.push(format!("if {now} < {due} goto {skip}"));
                }
                if *with_quota {
                    let (n, max) = (self.fresh("clicks"), self.fresh("max"));
                    out.push(format!("{n} = call Prefs.getInt(\"clk_count\")"));
                    out.push(format!("{max} = call Network.readResponse(\"max_clk\")"));
                    out.push(format!("if {n} >= {max} goto {skip}"));
                }
            }
        }
        out
    }

    /// Emits the guarded dispatch of `ev` to the ad view, possibly through a
    /// chain of forwarding methods. The guard sits in the method holding the
    /// dispatch or in its immediate caller.
    fn dispatch(&mut self, body: &mut Vec<String>, ev: &str, guard: Guard) {
        let mut depth = self.wrapper_depth();
        // a guard on a handler variable has to sit in the handler, which is
        // only an immediate caller of the dispatching method at depth one
        if matches!(guard, Guard::OnVar(..) | Guard::ActionCheck(_)) {
            depth = depth.min(1);
        }
        let view = self.ad_view.clone();
        if depth == 0 {
            let skip = self.fresh("Ldone");
            let g = self.guard_lines(&guard, &skip);
            let guarded = !g.is_empty();
            body.extend(g);
            body.push(format!("call {view} View.dispatchTouchEvent({ev})"));
            if guarded {
                body.push(format!("label {skip}"));
            }
            return;
        }
        let names: Vec<String> = (0..depth).map(|_| self.fresh("fire")).collect();
        // the guard on a caller-side variable must stay where the variable lives
        let guard_in_host = !matches!(guard, Guard::OnVar(..) | Guard::ActionCheck(_)) && self.chance(0.5);
        let host_guard = if guard_in_host { guard.clone() } else { Guard::None };
        let caller_guard = if guard_in_host { Guard::None } else { guard };

        let skip = self.fresh("Ldone");
        let mut host = self.guard_lines(&host_guard, &skip);
        let guarded = !host.is_empty();
        host.push("call target View.dispatchTouchEvent(ev)".to_string());
        if guarded {
            host.push(format!("label {skip}"));
        }
        self.add_method(names[depth - 1].clone(), &["ev", "target"], host);
        for i in (0..depth - 1).rev() {
            let callee = self.qualified(&names[i + 1]);
            let mut b = Vec::new();
            if i == depth - 2 {
                let skip = self.fresh("Ldone");
                let g = self.guard_lines(&caller_guard, &skip);
                let guarded = !g.is_empty();
                b.extend(g);
                b.push(format!("call {callee}(ev, target)"));
                if guarded {
                    b.push(format!("label {skip}"));
                }
            } else {
                b.push(format!("call {callee}(ev, target)"));
            }
            self.add_method(names[i].clone(), &["ev", "target"], b);
        }
        let first = self.qualified(&names[0]);
        if depth == 1 {
            let skip = self.fresh("Ldone");
            let g = self.guard_lines(&caller_guard, &skip);
            let guarded = !g.is_empty();
            body.extend(g);
            body.push(format!("call {first}({ev}, {view})"));
            if guarded {
                body.push(format!("label {skip}"));
            }
        } else {
            body.push(format!("call {first}({ev}, {view})"));
        }
    }

    fn obtain(&mut self, body: &mut Vec<String>, x: &str, y: &str) -> String {
        let ev = self.fresh("ev");
        if self.chance(0.5) {
            let t = self.fresh("t");
            body.push(format!("{t} = call SystemClock.uptimeMillis()"));
            body.push(format!("{ev} = call MotionEvent.obtain({t}, {t}, 0, {x}, {y}, 0)"));
        } else {
            body.push(format!("{ev} = call MotionEvent.obtain(0, 0, 1, {x}, {y}, 0)"));
        }
        ev
    }

    fn benign_site(&mut self) {
        let handler = self.fresh_handler(&["onTouch", "onInterceptTouchEvent", "forwardTouch", "relayClick"]);
        let mut body = Vec::new();
        let budget = self.dead_budget();
        let before = self.rng.random_range(0..=budget);
        self.dead_code(&mut body, before);
        // at most one coordinate may be pinned to the view center
        let fixed_x = self.chance(0.5);
        let x = self.benign_coord(&mut body, Axis::X, fixed_x);
        let y = self.benign_coord(&mut body, Axis::Y, !fixed_x);
        let ev = self.obtain(&mut body, &x, &y);
        self.dead_code(&mut body, budget - before);
        let guard = weighted(
            self.rng,
            &[
                (55, Guard::None),
                (7, Guard::Debounce),
                (12, Guard::ActionCheck("e".into())),
                (5, Guard::NetworkCheck),
                (2, Guard::OnlineDebounce),
                (12, Guard::PrefFlag),
                (3, Guard::Sample),
            ],
        )
        .clone();
        self.dispatch(&mut body, &ev, guard);
        self.add_method(handler, &["e"], body);
    }

    fn fraud_site(&mut self, strategy: Strategy) {
        let follow_fig = strategy == Strategy::FollowUserClick && self.chance(0.5);
        self.server_ratio = self.chance(0.7);
        let replay = strategy == Strategy::RandomTiming && self.chance(0.6);
        let (names, event): (&[&str], &str) = match strategy {
            Strategy::RandomTiming if replay => (&["onTouch", "dispatchTouch"], "e"),
            Strategy::FollowUserClick if follow_fig => (&["onClick"], "v"),
            Strategy::FollowUserClick => (&["onTouch", "onInterceptTouchEvent"], "e"),
            Strategy::RandomCoords => (&["run", "onAdLoaded", "handleMessage"], "m"),
            Strategy::RandomTiming => (&["run", "onTick", "handleMessage"], "m"),
            Strategy::ServerConfigured => (&["onResponse", "onConfigLoaded", "handleMessage"], "m"),
        };
        let handler = self.fresh_handler(names);
        let mut body = Vec::new();
        let budget = self.dead_budget();
        let before = self.rng.random_range(0..=budget);
        self.dead_code(&mut body, before);
        let x = self.fraud_coord(&mut body, Axis::X, strategy, event);
        let y = self.fraud_coord(&mut body, Axis::Y, strategy, event);
        let ev = self.obtain(&mut body, &x, &y);
        self.dead_code(&mut body, budget - before);
        let guard = match strategy {
            Strategy::RandomCoords => weighted(
                self.rng,
                &[
                    (50, Guard::None),
                    (20, Guard::NetworkCheck),
                    (15, Guard::Debounce),
                    (15, Guard::PrefFlag),
                ],
            )
            .clone(),
            Strategy::RandomTiming => {
                let draws = *[1, 1, 2].choose(self.rng).unwrap();
                Guard::RandomGate { draws }
            }
            Strategy::FollowUserClick if follow_fig && x.starts_with('p') && self.chance(0.6) => {
                // reuse the horizontal draw, as in the canonical sample
                let draw = body.iter().find_map(|l| {
                    let (lhs, rhs) = l.split_once(" = ")?;
                    let draw = ["Random.nextFloat", "Random.nextDouble", "Math.random"]
                        .iter()
                        .any(|api| rhs.contains(api));
                    draw.then(|| lhs.to_string())
                });
                match draw {
                    Some(d) => Guard::OnVar(d, "0.5"),
                    None => Guard::RandomGate { draws: 1 },
                }
            }
            Strategy::FollowUserClick => Guard::RandomGate { draws: 1 },
            Strategy::ServerConfigured => {
                // remote control always comes with a schedule, a quota, or both
                let with_clock = self.chance(0.5);
                Guard::ServerFlag {
                    with_clock,
                    with_quota: !with_clock || self.chance(0.5),
                }
            }
        };
        self.dispatch(&mut body, &ev, guard);
        self.add_method(handler, &[event], body);
    }

    fn fresh_handler(&mut self, names: &[&str]) -> String {
        let base = *names.choose(self.rng).unwrap();
        if self.methods.iter().any(|m| m.name == base) {
            self.fresh(base)
        } else {
            base.to_string()
        }
    }

    /// A synthetic tap on a non-ad view; never a click site.
    fn decoy_dispatch(&mut self) {
        let Some(target) = self.decoys.choose(self.rng).cloned() else {
            return;
        };
        let (r, ev) = (self.fresh("r"), self.fresh("ev"));
        let body = vec![
            format!("{r} = call Random.nextInt(40)"),
            format!("{ev} = call MotionEvent.obtain(0, 0, 0, {r}, 10, 0)"),
            format!("call {target} View.dispatchTouchEvent({ev})"),
        ];
        let name = self.fresh("autoTap");
        self.add_method(name, &[], body);
    }
}

pub(super) fn build_package(
    rng: &mut ChaCha8Rng,
    noise: &NoiseConfig,
    kind: SampleKind,
    index: usize,
    sites: usize,
) -> String {
    let mut out = String::new();
    let vendor = *VENDORS.choose(rng).unwrap();
    let app = *APPS.choose(rng).unwrap();
    writeln!(out, "package com.{vendor}.{app}{index}").unwrap();
    let perms: &[&str] = match rng.random_range(0..3) {
        0 => &["INTERNET"],
        1 => &["INTERNET", "ACCESS_NETWORK_STATE"],
        _ => &["ACCESS_NETWORK_STATE", "VIBRATE"],
    };
    let prefix = if rng.random_bool(0.5) {
        "android.permission."
    } else {
        ""
    };
    for p in perms {
        writeln!(out, "permission {prefix}{p}").unwrap();
    }
    writeln!(out, "library {}", AD_LIBRARIES.choose(rng).unwrap()).unwrap();
    if rng.random_bool(0.5) {
        writeln!(out, "library {}", OTHER_LIBRARIES.choose(rng).unwrap()).unwrap();
    }
    let (name, class, w, h, text) = *AD_VIEWS.choose(rng).unwrap();
    write!(out, "view {name} class={class} w={w} h={h}").unwrap();
    if !text.is_empty() {
        write!(out, " text=\"{text}\"").unwrap();
    }
    out.push('\n');
    let mut decoys = Vec::new();
    if noise.decoy_views {
        let n = rng.random_range(0..=2);
        for &(dn, dc, dw, dh, dt) in DECOY_VIEWS.choose_multiple(rng, n) {
            write!(out, "view {dn} class={dc} w={dw} h={dh}").unwrap();
            if !dt.is_empty() {
                write!(out, " text=\"{dt}\"").unwrap();
            }
            out.push('\n');
            decoys.push(dn.to_string());
        }
    }
    let class_name = CLASSES.choose(rng).unwrap().to_string();
    let mut b = Builder {
        rng,
        noise,
        class: class_name.clone(),
        ad_view: name.to_string(),
        decoys,
        methods: Vec::new(),
        counter: 0,
        server_ratio: true,
    };
    for _ in 0..sites {
        match kind {
            SampleKind::Benign => b.benign_site(),
            SampleKind::Fraud(s) => b.fraud_site(s),
        }
    }
    if !b.decoys.is_empty() && b.chance(0.4) {
        b.decoy_dispatch();
    }
    writeln!(out, "\nclass {class_name}").unwrap();
    for m in &b.methods {
        writeln!(out, "method {}({})", m.name, m.params.join(", ")).unwrap();
        for line in &m.body {
            if line.starts_with("label ") {
                writeln!(out, "  {line}").unwrap();
            } else {
                writeln!(out, "    {line}").unwrap();
            }
        }
        writeln!(out, "endmethod").unwrap();
    }
    writeln!(out, "endclass\nendpackage").unwrap();
    out
}
