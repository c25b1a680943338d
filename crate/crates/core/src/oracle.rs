//! Black-box query oracles and the query ledger.
//!
//! A [`QueryOracle`] answers label queries (and optionally score queries)
//! and counts every call. Nothing here caches answers: every call is a
//! query and is charged to the ledger.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::error::{check_dim, Error, Result};

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// The victim model as seen by the attacker.
pub trait QueryOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn num_classes(&self) -> usize;

    /// Whether [`QueryOracle::query_scores`] is available.
    fn has_scores(&self) -> bool {
        false
    }

    /// Class probabilities at `x`. Costs one query.
    fn query_scores(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("score"))
    }

    /// Hard label at `x`. Costs one query.
    fn query_label(&self, x: &[f64]) -> Result<usize>;

    /// Total queries answered so far.
    fn queries_used(&self) -> u64;
}

/// A local model that can be queried without cost accounting.
pub trait Classifier: Send + Sync {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn label(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }
}

impl<T: Classifier + ?Sized> Classifier for &T {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).scores(x)
    }
    fn label(&self, x: &[f64]) -> Result<usize> {
        (**self).label(x)
    }
}

/// Feedback exposed by a [`LedgerOracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    Scores,
    LabelOnly,
}

/// Wraps a local [`Classifier`] and charges each call to an atomic counter.
pub struct LedgerOracle<C> {
    model: C,
    feedback: Feedback,
    used: AtomicU64,
}

impl<C: Classifier> LedgerOracle<C> {
    pub fn new(model: C, feedback: Feedback) -> Self {
        Self {
            model,
            feedback,
            used: AtomicU64::new(0),
        }
    }

    pub fn model(&self) -> &C {
        &self.model
    }

    fn charge(&self, x: &[f64]) -> Result<()> {
        check_dim(self.model.input_dim(), x.len())?;
        self.used.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
}

impl<C: Classifier> QueryOracle for LedgerOracle<C> {
    fn dim(&self) -> usize {
        self.model.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn has_scores(&self) -> bool {
        self.feedback == Feedback::Scores
    }

    fn query_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.feedback != Feedback::Scores {
            return Err(Error::Unsupported("score"));
        }
        self.charge(x)?;
        self.model.scores(x)
    }

    fn query_label(&self, x: &[f64]) -> Result<usize> {
        self.charge(x)?;
        self.model.label(x)
    }

    fn queries_used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }
}

impl<T: QueryOracle + ?Sized> QueryOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn has_scores(&self) -> bool {
        (**self).has_scores()
    }
    fn query_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).query_scores(x)
    }
    fn query_label(&self, x: &[f64]) -> Result<usize> {
        (**self).query_label(x)
    }
    fn queries_used(&self) -> u64 {
        (**self).queries_used()
    }
}

// ---------------------------------------------------------------------------
// Line-delimited protocol
// ---------------------------------------------------------------------------

/// One request line: the input as comma-separated decimals. Uses the
/// shortest representation that round-trips exactly.
pub fn encode_request(x: &[f64]) -> String {
    join(x)
}

pub fn decode_request(line: &str) -> Result<Vec<f64>> {
    parse_decimals(line)
}

pub fn encode_scores(scores: &[f64]) -> String {
    join(scores)
}

pub fn decode_scores(line: &str) -> Result<Vec<f64>> {
    parse_decimals(line)
}

pub fn encode_label(label: usize) -> String {
    label.to_string()
}

pub fn decode_label(line: &str) -> Result<usize> {
    line.trim().parse().map_err(|_| Error::Format {
        offset: 0,
        reason: format!("expected a class index, got {:?}", line.trim()),
    })
}

fn join(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 20);
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&x.to_string());
    }
    s
}

fn parse_decimals(line: &str) -> Result<Vec<f64>> {
    let line = line.trim_end_matches(['\n', '\r']);
    let mut offset = 0;
    let mut out = Vec::new();
    for field in line.split(',') {
        let v: f64 = field.trim().parse().map_err(|_| Error::Format {
            offset,
            reason: format!("not a decimal: {field:?}"),
        })?;
        out.push(v);
        offset += field.len() + 1;
    }
    Ok(out)
}

/// Answers protocol requests read from `input` using `model` until EOF.
/// Returns the number of requests served.
pub fn serve<C: Classifier, R: BufRead, W: Write>(
    model: &C,
    feedback: Feedback,
    input: R,
    mut output: W,
) -> Result<u64> {
    let mut served = 0;
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let x = decode_request(&line)?;
        check_dim(model.input_dim(), x.len())?;
        let reply = match feedback {
            Feedback::Scores => encode_scores(&model.scores(&x)?),
            Feedback::LabelOnly => encode_label(model.label(&x)?),
        };
        writeln!(output, "{reply}").map_err(|e| Error::io("<stdout>", e))?;
        output.flush().map_err(|e| Error::io("<stdout>", e))?;
        served += 1;
    }
    Ok(served)
}

struct Channel<R, W> {
    reader: R,
    writer: W,
}

/// An oracle on the far side of a pair of byte streams speaking the
/// line protocol. Queries are serialized through a mutex.
pub struct StreamOracle<R, W> {
    dim: usize,
    num_classes: usize,
    feedback: Feedback,
    channel: Mutex<Channel<R, W>>,
    used: AtomicU64,
}

impl<R: BufRead + Send, W: Write + Send> StreamOracle<R, W> {
    pub fn new(reader: R, writer: W, dim: usize, num_classes: usize, feedback: Feedback) -> Self {
        Self {
            dim,
            num_classes,
            feedback,
            channel: Mutex::new(Channel { reader, writer }),
            used: AtomicU64::new(0),
        }
    }

    fn round_trip(&self, x: &[f64]) -> Result<String> {
        check_dim(self.dim, x.len())?;
        let mut ch = self
            .channel
            .lock()
            .map_err(|_| Error::Oracle("oracle channel poisoned".into()))?;
        self.used.fetch_add(1, Ordering::SeqCst);
        writeln!(ch.writer, "{}", encode_request(x))
            .and_then(|_| ch.writer.flush())
            .map_err(|e| Error::Oracle(format!("write failed: {e}")))?;
        let mut line = String::new();
        let n = ch
            .reader
            .read_line(&mut line)
            .map_err(|e| Error::Oracle(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(Error::Oracle("oracle closed its output".into()));
        }
        Ok(line)
    }

    fn scores_from_line(&self, line: &str) -> Result<Vec<f64>> {
        let s = decode_scores(line)?;
        check_dim(self.num_classes, s.len())?;
        Ok(s)
    }
}

impl<R: BufRead + Send, W: Write + Send> QueryOracle for StreamOracle<R, W> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn has_scores(&self) -> bool {
        self.feedback == Feedback::Scores
    }

    fn query_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.feedback != Feedback::Scores {
            return Err(Error::Unsupported("score"));
        }
        let line = self.round_trip(x)?;
        self.scores_from_line(&line)
    }

    fn query_label(&self, x: &[f64]) -> Result<usize> {
        let line = self.round_trip(x)?;
        match self.feedback {
            Feedback::Scores => Ok(argmax(&self.scores_from_line(&line)?)),
            Feedback::LabelOnly => decode_label(&line),
        }
    }

    fn queries_used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }
}

/// A victim running as a child process, spoken to over its standard streams.
pub struct ProcessOracle {
    child: Child,
    inner: StreamOracle<BufReader<ChildStdout>, BufWriter<ChildStdin>>,
}

impl ProcessOracle {
    pub fn spawn(mut command: Command, dim: usize, num_classes: usize, feedback: Feedback) -> Result<Self> {
        let program = command.get_program().to_os_string();
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self {
            child,
            inner: StreamOracle::new(
                BufReader::new(stdout),
                BufWriter::new(stdin),
                dim,
                num_classes,
                feedback,
            ),
        })
    }
}

impl Drop for ProcessOracle {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl QueryOracle for ProcessOracle {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }
    fn has_scores(&self) -> bool {
        self.inner.has_scores()
    }
    fn query_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inner.query_scores(x)
    }
    fn query_label(&self, x: &[f64]) -> Result<usize> {
        self.inner.query_label(x)
    }
    fn queries_used(&self) -> u64 {
        self.inner.queries_used()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Fixed(Vec<f64>);

    impl Classifier for Fixed {
        fn input_dim(&self) -> usize {
            2
        }
        fn num_classes(&self) -> usize {
            self.0.len()
        }
        fn scores(&self, _x: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
        assert_eq!(argmax(&[0.1, 0.2, 0.7]), 2);
    }

    #[test]
    fn ledger_counts_every_call() {
        let o = LedgerOracle::new(Fixed(vec![0.3, 0.7]), Feedback::Scores);
        o.query_scores(&[0.0, 0.0]).unwrap();
        o.query_label(&[0.0, 0.0]).unwrap();
        assert_eq!(o.queries_used(), 2);
        assert!(o.query_label(&[0.0]).is_err());
        assert_eq!(o.queries_used(), 2);
    }

    #[test]
    fn label_only_refuses_scores() {
        let o = LedgerOracle::new(Fixed(vec![0.3, 0.7]), Feedback::LabelOnly);
        assert!(matches!(o.query_scores(&[0.0, 0.0]), Err(Error::Unsupported(_))));
        assert_eq!(o.query_label(&[0.0, 0.0]).unwrap(), 1);
        assert_eq!(o.queries_used(), 1);
    }

    #[test]
    fn malformed_lines_report_offsets() {
        match decode_request("0.5,abc") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(decode_label("x").is_err());
        assert_eq!(decode_label("7\n").unwrap(), 7);
    }

    #[test]
    fn serve_answers_each_line() {
        let model = Fixed(vec![0.25, 0.75]);
        let mut out = Vec::new();
        let n = serve(&model, Feedback::Scores, "0.1,0.2\n\n0.3,0.4\n".as_bytes(), &mut out).unwrap();
        assert_eq!(n, 2);
        assert_eq!(String::from_utf8(out).unwrap(), "0.25,0.75\n0.25,0.75\n");
        let mut out = Vec::new();
        serve(&model, Feedback::LabelOnly, "0.1,0.2\n".as_bytes(), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1\n");
    }

    proptest! {
        #[test]
        fn request_encoding_round_trips(v in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            prop_assert_eq!(decode_request(&encode_request(&v)).unwrap(), v);
        }
    }
}
