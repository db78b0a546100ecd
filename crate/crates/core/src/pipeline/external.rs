//! External reasoner reached over a JSON wire protocol, either HTTP POST or
//! line-delimited JSON on a child process's stdin/stdout.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::raster::encode_ppm;
use crate::render::RenderedView;
use crate::scene::{ObjectRecord, SceneState};
use crate::viewpoint::{Anchors, RenderSpec, SurroundParams};

use super::{
    find, validate_question, Answer, PipelineError, Plan, Question, Reasoner, RenderDecision,
    Result, Strategy,
};

/// Environment variable naming the default reasoner URL.
pub const REASONER_URL_ENV: &str = "RENDERMEM_REASONER_URL";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reason,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireObject {
    pub id: String,
    pub center: Vec3,
    pub radius: f64,
}

impl From<&ObjectRecord> for WireObject {
    fn from(o: &ObjectRecord) -> Self {
        WireObject {
            id: o.id.clone(),
            center: o.sphere.center,
            radius: o.sphere.radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub role: Role,
    pub question: String,
    /// Base64-encoded binary PPM images.
    pub images: Vec<String>,
    pub object_list: Vec<WireObject>,
    pub strategy: String,
    pub stage: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub answer: String,
}

/// One request/response round-trip with an external reasoner.
pub trait Transport: Send + Sync {
    fn describe(&self) -> String;
    fn exchange(&self, request: &WireRequest) -> Result<WireResponse>;
}

fn parse_response(body: &str) -> Result<WireResponse> {
    serde_json::from_str(body.trim()).map_err(|e| {
        PipelineError::ReasonerProtocol(format!("bad response `{}`: {e}", body.trim()))
    })
}

fn encode_request(request: &WireRequest) -> Result<String> {
    serde_json::to_string(request).map_err(|e| PipelineError::ReasonerProtocol(e.to_string()))
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

/// JSON over HTTP POST.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>) -> Self {
        Self::with_options(url, DEFAULT_TIMEOUT, 4)
    }

    pub fn with_options(url: impl Into<String>, timeout: Duration, max_in_flight: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            url: url.into(),
            agent,
            in_flight: InFlight {
                limit: max_in_flight.max(1),
                active: Mutex::new(0),
                freed: Condvar::new(),
            },
        }
    }
}

impl Transport for HttpTransport {
    fn describe(&self) -> String {
        self.url.clone()
    }

    fn exchange(&self, request: &WireRequest) -> Result<WireResponse> {
        let body = encode_request(request)?;
        let _permit = self.in_flight.acquire();
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| PipelineError::ReasonerUnavailable(format!("{}: {e}", self.url)))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| PipelineError::ReasonerUnavailable(format!("{}: {e}", self.url)))?;
        if status.is_server_error() {
            return Err(PipelineError::ReasonerUnavailable(format!(
                "{}: HTTP {status}",
                self.url
            )));
        }
        if !status.is_success() {
            return Err(PipelineError::ReasonerProtocol(format!(
                "{}: HTTP {status}",
                self.url
            )));
        }
        parse_response(&text)
    }
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Line-delimited JSON with a child process; one request per line.
pub struct StdioTransport {
    command: String,
    io: Mutex<ChildIo>,
}

impl StdioTransport {
    /// Spawn `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PipelineError::ReasonerUnavailable(format!("{command}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(StdioTransport {
            command: command.to_string(),
            io: Mutex::new(ChildIo {
                child,
                stdin,
                stdout,
            }),
        })
    }
}

impl Transport for StdioTransport {
    fn describe(&self) -> String {
        format!("stdio:{}", self.command)
    }

    fn exchange(&self, request: &WireRequest) -> Result<WireResponse> {
        let line = encode_request(request)?;
        let mut io = self.io.lock().unwrap_or_else(|e| e.into_inner());
        let gone = |e: std::io::Error| {
            PipelineError::ReasonerUnavailable(format!("{}: {e}", self.command))
        };
        writeln!(io.stdin, "{line}").map_err(gone)?;
        io.stdin.flush().map_err(gone)?;
        let mut reply = String::new();
        if io.stdout.read_line(&mut reply).map_err(gone)? == 0 {
            return Err(PipelineError::ReasonerUnavailable(format!(
                "{}: closed its output",
                self.command
            )));
        }
        parse_response(&reply)
    }
}

impl Drop for StdioTransport {
    fn drop(&mut self) {
        let io = self.io.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = io.child.kill();
        let _ = io.child.wait();
    }
}

const NECESSITY_PROMPT: &str =
    "If the object list alone answers the question, reply `answer: <answer>`. Otherwise reply `render`.";
const SPEC_PROMPT: &str = "Choose the views to render. Reply `surround <object_id>` to circle one object, or `directional <source_id> <target_id>` to look from the source toward the target.";
const ONE_STEP_PROMPT: &str = "If the object list alone answers the question, reply `answer: <answer>`. Otherwise choose the views to render: reply `surround <object_id>` to circle one object, or `directional <source_id> <target_id>` to look from the source toward the target.";
const MODE_PROMPT: &str = "Choose the rendering mode. Reply `surround` to circle one object, or `directional` to look from one object toward another.";
const SURROUND_ANCHOR_PROMPT: &str = "Reply with the id of the object to circle.";
const DIRECTIONAL_ANCHOR_PROMPT: &str =
    "Reply with the source id and the target id, separated by a space.";

/// A parsed planning reply.
#[derive(Debug, Clone, PartialEq)]
enum Reply {
    Answer(String),
    Render,
    Surround(Option<String>),
    Directional(Option<(String, String)>),
    Ids(Vec<String>),
}

fn parse_reply(text: &str) -> Reply {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    if let Some(rest) = lower.strip_prefix("answer:") {
        let start = t.len() - rest.len();
        return Reply::Answer(t[start..].trim().to_string());
    }
    let words: Vec<&str> = t
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|w| !w.is_empty())
        .map(|w| w.trim_matches(|c: char| c == '`' || c == '.' || c == '"'))
        .filter(|w| !w.is_empty())
        .collect();
    match words.split_first() {
        Some((head, rest)) if head.eq_ignore_ascii_case("render") && rest.is_empty() => {
            Reply::Render
        }
        Some((head, rest)) if head.eq_ignore_ascii_case("surround") => {
            Reply::Surround(match rest {
                [id] => Some(id.to_string()),
                _ => None,
            })
        }
        Some((head, rest)) if head.eq_ignore_ascii_case("directional") => {
            Reply::Directional(match rest {
                [s, t] => Some((s.to_string(), t.to_string())),
                _ => None,
            })
        }
        _ => Reply::Ids(words.iter().map(|w| w.to_string()).collect()),
    }
}

/// Reasoner behind a [`Transport`].
pub struct ExternalReasoner {
    transport: Box<dyn Transport>,
    name: String,
}

impl ExternalReasoner {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        let name = format!("external:{}", transport.describe());
        ExternalReasoner { transport, name }
    }

    pub fn http(url: &str) -> Self {
        Self::new(Box::new(HttpTransport::new(url)))
    }

    pub fn stdio(command: &str) -> Result<Self> {
        Ok(Self::new(Box::new(StdioTransport::spawn(command)?)))
    }

    fn ask(
        &self,
        role: Role,
        text: String,
        images: Vec<String>,
        objects: &[ObjectRecord],
        strategy: Strategy,
        stage: u32,
    ) -> Result<String> {
        let request = WireRequest {
            role,
            question: text,
            images,
            object_list: objects.iter().map(WireObject::from).collect(),
            strategy: strategy.name().to_string(),
            stage,
        };
        Ok(self.transport.exchange(&request)?.answer)
    }

    /// Ask the reasoner, acting as judge, whether `prediction` means the same
    /// as `truth` for `question`.
    pub fn judge(&self, question: &Question, prediction: &str, truth: &str) -> Result<bool> {
        let text = format!(
            "Question: {}\nReference answer: {truth}\nCandidate answer: {prediction}\nReply `yes` if the candidate answer is semantically identical to the reference answer, otherwise `no`.",
            question.to_natural_language()
        );
        let reply = self.ask(Role::Judge, text, Vec::new(), &[], Strategy::default(), 1)?;
        let reply = reply.trim().trim_end_matches('.').to_ascii_lowercase();
        match reply.as_str() {
            "yes" | "true" | "1" => Ok(true),
            "no" | "false" | "0" => Ok(false),
            other => Err(PipelineError::ReasonerProtocol(format!(
                "judge replied `{other}`"
            ))),
        }
    }
}

fn protocol(stage: u32, reply: &Reply) -> PipelineError {
    PipelineError::ReasonerProtocol(format!("unexpected reply at stage {stage}: {reply:?}"))
}

fn spec_from(
    anchors: Anchors,
    objects: &[ObjectRecord],
    params: SurroundParams,
) -> Result<RenderSpec> {
    for id in anchors.ids() {
        find(objects, id)?;
    }
    Ok(RenderSpec::new(anchors, params)?)
}

fn anchors_from(reply: Reply, stage: u32) -> Result<Anchors> {
    match reply {
        Reply::Surround(Some(object_id)) => Ok(Anchors::Surround { object_id }),
        Reply::Directional(Some((source_id, target_id))) => Ok(Anchors::Directional {
            source_id,
            target_id,
        }),
        Reply::Surround(None) | Reply::Directional(None) => Err(PipelineError::AnchorArity(
            format!("wrong number of anchors at stage {stage}"),
        )),
        other => Err(protocol(stage, &other)),
    }
}

impl Reasoner for ExternalReasoner {
    fn name(&self) -> &str {
        &self.name
    }

    fn plan(
        &self,
        question: &Question,
        objects: &[ObjectRecord],
        strategy: Strategy,
        params: SurroundParams,
    ) -> Result<Plan> {
        validate_question(question, objects)?;
        let nl = question.to_natural_language();
        let prompt = |instruction: &str| format!("{nl}\n{instruction}");
        let mut stage = 1;
        let mut send = |instruction: &str| -> Result<Reply> {
            let reply = self.ask(
                Role::Reason,
                prompt(instruction),
                Vec::new(),
                objects,
                strategy,
                stage,
            )?;
            stage += 1;
            Ok(parse_reply(&reply))
        };
        let direct = |text: String, exchanges| Plan {
            decision: RenderDecision::Answer(Answer::new(text)),
            spec: None,
            exchanges,
        };
        let render = |spec, exchanges| Plan {
            decision: RenderDecision::RequestRendering,
            spec: Some(spec),
            exchanges,
        };
        match strategy {
            Strategy::OneStep => match send(ONE_STEP_PROMPT)? {
                Reply::Answer(a) => Ok(direct(a, 1)),
                r => Ok(render(spec_from(anchors_from(r, 1)?, objects, params)?, 1)),
            },
            Strategy::TwoStep => match send(NECESSITY_PROMPT)? {
                Reply::Answer(a) => Ok(direct(a, 1)),
                Reply::Render => {
                    let anchors = anchors_from(send(SPEC_PROMPT)?, 2)?;
                    Ok(render(spec_from(anchors, objects, params)?, 2))
                }
                r => Err(protocol(1, &r)),
            },
            Strategy::ThreeStep => match send(NECESSITY_PROMPT)? {
                Reply::Answer(a) => Ok(direct(a, 1)),
                Reply::Render => {
                    let anchors = match send(MODE_PROMPT)? {
                        Reply::Surround(None) => match send(SURROUND_ANCHOR_PROMPT)? {
                            Reply::Ids(ids) if ids.len() == 1 => Anchors::Surround {
                                object_id: ids[0].clone(),
                            },
                            Reply::Ids(_) => {
                                return Err(PipelineError::AnchorArity(
                                    "surround needs exactly one anchor".into(),
                                ))
                            }
                            r => return Err(protocol(3, &r)),
                        },
                        Reply::Directional(None) => match send(DIRECTIONAL_ANCHOR_PROMPT)? {
                            Reply::Ids(ids) if ids.len() == 2 => Anchors::Directional {
                                source_id: ids[0].clone(),
                                target_id: ids[1].clone(),
                            },
                            Reply::Ids(_) => {
                                return Err(PipelineError::AnchorArity(
                                    "directional needs exactly two anchors".into(),
                                ))
                            }
                            r => return Err(protocol(3, &r)),
                        },
                        r => return Err(protocol(2, &r)),
                    };
                    Ok(render(spec_from(anchors, objects, params)?, 3))
                }
                r => Err(protocol(1, &r)),
            },
        }
    }

    fn reason(
        &self,
        question: &Question,
        views: &[RenderedView],
        _scene: &SceneState,
        objects: &[ObjectRecord],
        strategy: Strategy,
        stage: u32,
    ) -> Result<Answer> {
        let images = views
            .iter()
            .map(|v| BASE64.encode(encode_ppm(&v.rgb)))
            .collect();
        let text = format!(
            "{}\nAnswer from the rendered views.",
            question.to_natural_language()
        );
        let reply = self.ask(Role::Reason, text, images, objects, strategy, stage)?;
        let reply = reply.trim();
        let reply = match parse_reply(reply) {
            Reply::Answer(a) => a,
            _ => reply.to_string(),
        };
        Ok(Answer::new(reply))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_grammar() {
        assert_eq!(parse_reply("answer: 2"), Reply::Answer("2".into()));
        assert_eq!(
            parse_reply("Answer:  two chairs "),
            Reply::Answer("two chairs".into())
        );
        assert_eq!(parse_reply("render"), Reply::Render);
        assert_eq!(
            parse_reply("`surround Tv_0`"),
            Reply::Surround(Some("Tv_0".into()))
        );
        assert_eq!(
            parse_reply("directional Sofa_0 Tv_0"),
            Reply::Directional(Some(("Sofa_0".into(), "Tv_0".into())))
        );
        assert_eq!(parse_reply("surround"), Reply::Surround(None));
        assert_eq!(
            parse_reply("Sofa_0, Tv_0"),
            Reply::Ids(vec!["Sofa_0".into(), "Tv_0".into()])
        );
    }

    #[test]
    fn request_json_shape() {
        let req = WireRequest {
            role: Role::Judge,
            question: "q".into(),
            images: vec![],
            object_list: vec![WireObject {
                id: "Tv_0".into(),
                center: Vec3::new(0.0, 1.0, 0.0),
                radius: 0.5,
            }],
            strategy: "2step".into(),
            stage: 1,
        };
        let v: serde_json::Value = serde_json::to_value(&req).unwrap();
        assert_eq!(v["role"], "judge");
        assert_eq!(
            v["object_list"][0]["center"],
            serde_json::json!([0.0, 1.0, 0.0])
        );
        assert_eq!(v["stage"], 1);
    }

    #[test]
    fn stdio_round_trip() {
        let t = StdioTransport::spawn(r#"while read -r line; do echo '{"answer": "yes"}'; done"#)
            .unwrap();
        let req = WireRequest {
            role: Role::Reason,
            question: "q".into(),
            images: vec![],
            object_list: vec![],
            strategy: "1step".into(),
            stage: 1,
        };
        assert_eq!(t.exchange(&req).unwrap().answer, "yes");
        assert_eq!(t.exchange(&req).unwrap().answer, "yes");
    }

    #[test]
    fn unreachable_http_is_unavailable() {
        let t = HttpTransport::with_options("http://127.0.0.1:9/", Duration::from_secs(2), 1);
        let req = WireRequest {
            role: Role::Reason,
            question: "q".into(),
            images: vec![],
            object_list: vec![],
            strategy: "1step".into(),
            stage: 1,
        };
        assert!(matches!(
            t.exchange(&req),
            Err(PipelineError::ReasonerUnavailable(_))
        ));
    }
}
