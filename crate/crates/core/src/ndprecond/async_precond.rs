//! Background refactorization: the simulation submits value snapshots of the
//! system matrix and picks up finished factors at step boundaries.

use std::fmt;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ldlt::{Factorizer, FactorizerConfig, LdlFactors};
use crate::assembly::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefactorPolicy {
    /// Submit a new snapshot when at least `k` steps passed since the last
    /// submission and the worker is idle.
    EveryK(usize),
    /// Submit a new snapshot as soon as the previous one is done.
    OnCompletion,
}

impl Default for RefactorPolicy {
    fn default() -> Self {
        RefactorPolicy::OnCompletion
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondStatus {
    Empty,
    Factorizing,
    Ready,
}

impl fmt::Display for PrecondStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecondStatus::Empty => "empty",
            PrecondStatus::Factorizing => "factorizing",
            PrecondStatus::Ready => "ready",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AsyncConfig {
    pub factorizer: FactorizerConfig,
    pub policy: RefactorPolicy,
    /// When set, a snapshot submitted at step `s` is always picked up at step
    /// `s + lag` (waiting for it if needed), which makes runs reproducible
    /// regardless of thread timing. `None` picks up whatever is finished.
    pub swap_lag: Option<usize>,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        AsyncConfig {
            factorizer: FactorizerConfig::default(),
            policy: RefactorPolicy::default(),
            swap_lag: None,
        }
    }
}

struct Job {
    matrix: CsrMatrix,
    step: usize,
}

type Outcome = (usize, Result<LdlFactors>);

pub struct AsyncPreconditioner {
    config: AsyncConfig,
    jobs: Option<Sender<Job>>,
    outcomes: Receiver<Outcome>,
    worker: Option<JoinHandle<()>>,
    current: Option<Arc<LdlFactors>>,
    in_flight: Option<usize>,
    last_submit: Option<usize>,
    disabled: bool,
    swaps: usize,
}

impl fmt::Debug for AsyncPreconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AsyncPreconditioner")
            .field("config", &self.config)
            .field("status", &self.status())
            .field("in_flight", &self.in_flight)
            .field("disabled", &self.disabled)
            .field("swaps", &self.swaps)
            .finish()
    }
}

impl AsyncPreconditioner {
    pub fn new(config: AsyncConfig) -> Result<Self> {
        if let RefactorPolicy::EveryK(0) = config.policy {
            return Err(Error::invalid("ndprecond", "refactor interval must be at least 1"));
        }
        let mut factorizer = Factorizer::new(config.factorizer)?;
        let (job_tx, job_rx) = channel::<Job>();
        let (out_tx, out_rx) = channel::<Outcome>();
        let worker = std::thread::Builder::new()
            .name("ldlt-factor".into())
            .spawn(move || {
                while let Ok(job) = job_rx.recv() {
                    let result = factorizer.factor(&job.matrix, job.step);
                    if out_tx.send((job.step, result)).is_err() {
                        break;
                    }
                }
            })
            .map_err(|e| Error::Setup(format!("ndprecond: cannot start factorization worker: {e}")))?;
        Ok(AsyncPreconditioner {
            config,
            jobs: Some(job_tx),
            outcomes: out_rx,
            worker: Some(worker),
            current: None,
            in_flight: None,
            last_submit: None,
            disabled: false,
            swaps: 0,
        })
    }

    pub fn config(&self) -> &AsyncConfig {
        &self.config
    }

    pub fn status(&self) -> PrecondStatus {
        if self.current.is_some() {
            PrecondStatus::Ready
        } else if self.in_flight.is_some() {
            PrecondStatus::Factorizing
        } else {
            PrecondStatus::Empty
        }
    }

    /// True while a snapshot is being factored in the background.
    pub fn in_flight(&self) -> bool {
        self.in_flight.is_some()
    }

    /// Set after a failed factorization; callers fall back to Jacobi.
    pub fn is_disabled(&self) -> bool {
        self.disabled
    }

    pub fn swap_count(&self) -> usize {
        self.swaps
    }

    pub fn factors(&self) -> Option<&Arc<LdlFactors>> {
        self.current.as_ref()
    }

    /// Steps between `step` and the step whose matrix the current factors
    /// came from.
    pub fn staleness(&self, step: usize) -> Option<usize> {
        self.current.as_ref().map(|f| step.saturating_sub(f.source_step))
    }

    /// Step-boundary hook: swaps in finished factors, then submits a snapshot
    /// of `a` if the policy asks for one. Never waits on the worker unless a
    /// fixed swap lag is configured.
    pub fn update(&mut self, a: &CsrMatrix, step: usize) -> Result<()> {
        if self.disabled {
            return Ok(());
        }
        match (self.in_flight, self.config.swap_lag) {
            (Some(src), Some(lag)) if step >= src + lag => self.receive_blocking()?,
            (Some(_), None) => self.poll()?,
            _ => {}
        }
        if self.disabled || self.in_flight.is_some() {
            return Ok(());
        }
        let due = match (self.config.policy, self.last_submit) {
            (_, None) | (RefactorPolicy::OnCompletion, _) => true,
            (RefactorPolicy::EveryK(k), Some(last)) => step >= last + k,
        };
        if due {
            self.submit(a, step)?;
        }
        Ok(())
    }

    /// Blocks until the in-flight factorization (if any) is swapped in.
    pub fn wait_ready(&mut self) -> Result<()> {
        if self.in_flight.is_some() {
            self.receive_blocking()?;
        }
        Ok(())
    }

    /// `z = M⁻¹ r` with the current factors.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        match &self.current {
            Some(f) => super::apply(f, r),
            None => Err(Error::Lifecycle(format!(
                "ndprecond: preconditioner applied while {}",
                self.status()
            ))),
        }
    }

    fn submit(&mut self, a: &CsrMatrix, step: usize) -> Result<()> {
        let tx = self.jobs.as_ref().expect("sender lives as long as self");
        tx.send(Job {
            matrix: a.clone(),
            step,
        })
        .map_err(|_| Error::Lifecycle("ndprecond: factorization worker has stopped".into()))?;
        self.in_flight = Some(step);
        self.last_submit = Some(step);
        Ok(())
    }

    fn poll(&mut self) -> Result<()> {
        match self.outcomes.try_recv() {
            Ok(outcome) => self.accept(outcome),
            Err(TryRecvError::Empty) => Ok(()),
            Err(TryRecvError::Disconnected) => self.worker_lost(),
        }
    }

    fn receive_blocking(&mut self) -> Result<()> {
        loop {
            match self.outcomes.recv_timeout(Duration::from_secs(3600)) {
                Ok(outcome) => return self.accept(outcome),
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return self.worker_lost(),
            }
        }
    }

    fn accept(&mut self, (step, result): Outcome) -> Result<()> {
        self.in_flight = None;
        match result {
            Ok(f) => {
                self.current = Some(Arc::new(f));
                self.swaps += 1;
            }
            Err(e) => {
                log::warn!("ndprecond: factorization of step {step} failed ({e}); falling back to Jacobi");
                self.current = None;
                self.disabled = true;
            }
        }
        Ok(())
    }

    fn worker_lost(&mut self) -> Result<()> {
        self.in_flight = None;
        self.disabled = true;
        self.current = None;
        log::warn!("ndprecond: factorization worker stopped; falling back to Jacobi");
        Ok(())
    }
}

impl Drop for AsyncPreconditioner {
    fn drop(&mut self) {
        self.jobs.take();
        if let Some(h) = self.worker.take() {
            let _ = h.join();
        }
    }
}
