//! Parser for the line-oriented `.skel` skeleton description format.
//!
//! ```text
//! # comments run to end of line
//! inputs n=4 dim=1
//! bias beta=0.25
//! conv width=2 stride=1 activation=relu
//! fc activation=exp(a=1.5) delta=2
//! ```
//!
//! The header is required first; `bias` is optional; layer lines apply in
//! order and the final layer must be `fc`, which is what guarantees the
//! single output node.

use super::{LayerSpec, Skeleton, SkeletonBuilder, SkeletonError};
use crate::activations::{catalog, Activation, ParamKind};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &line[s..i],
                    column: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: s + 1,
        });
    }
    out
}

fn split_attr<'a>(tok: &Token<'a>, line: usize) -> Result<(&'a str, &'a str), ParseError> {
    tok.text.split_once('=').ok_or_else(|| {
        ParseError::new(
            line,
            tok.column,
            format!("expected key=value, got `{}`", tok.text),
        )
    })
}

fn parse_usize(value: &str, key: &str, line: usize, column: usize) -> Result<usize, ParseError> {
    value.parse().map_err(|_| {
        ParseError::new(
            line,
            column,
            format!("{key} must be a positive integer, got `{value}`"),
        )
    })
}

fn parse_f64(value: &str, key: &str, line: usize, column: usize) -> Result<f64, ParseError> {
    value.parse().map_err(|_| {
        ParseError::new(line, column, format!("{key} must be a number, got `{value}`"))
    })
}

fn parse_activation(token: &Token<'_>, line: usize) -> Result<Activation, ParseError> {
    let (_, spec) = split_attr(token, line)?;
    let (name, param) = match spec.split_once('(') {
        None => (spec, None),
        Some((name, rest)) => {
            let inner = rest.strip_suffix(')').ok_or_else(|| {
                ParseError::new(line, token.column, format!("missing `)` in `{spec}`"))
            })?;
            let (key, value) = inner.split_once('=').ok_or_else(|| {
                ParseError::new(
                    line,
                    token.column,
                    format!("expected `{name}({}=...)`", expected_key(name)),
                )
            })?;
            if key != expected_key(name) {
                return Err(ParseError::new(
                    line,
                    token.column,
                    format!("activation `{name}` takes parameter `{}`", expected_key(name)),
                ));
            }
            let value = parse_f64(value, key, line, token.column)?;
            (name, Some(value))
        }
    };
    if catalog::lookup(name).is_none() {
        return Err(ParseError::new(
            line,
            token.column,
            format!("unknown activation `{name}`"),
        ));
    }
    catalog::make_activation(name, param)
        .map_err(|e| ParseError::new(line, token.column, e.to_string()))
}

fn expected_key(name: &str) -> &'static str {
    match catalog::lookup(name).map(|f| f.param()) {
        Some(ParamKind::Degree) => "n",
        _ => "a",
    }
}

/// Fields shared by `conv` and `fc` lines.
struct LayerAttrs {
    width: Option<usize>,
    stride: Option<usize>,
    activation: Option<Activation>,
    delta: Option<f64>,
}

fn parse_layer_attrs(
    tokens: &[Token<'_>],
    line: usize,
    allow_shape: bool,
) -> Result<LayerAttrs, ParseError> {
    let mut attrs = LayerAttrs {
        width: None,
        stride: None,
        activation: None,
        delta: None,
    };
    for tok in tokens {
        let (key, value) = split_attr(tok, line)?;
        match key {
            "width" if allow_shape => {
                attrs.width = Some(parse_usize(value, key, line, tok.column)?);
            }
            "stride" if allow_shape => {
                attrs.stride = Some(parse_usize(value, key, line, tok.column)?);
            }
            "activation" => attrs.activation = Some(parse_activation(tok, line)?),
            "delta" => attrs.delta = Some(parse_f64(value, key, line, tok.column)?),
            _ => {
                return Err(ParseError::new(
                    line,
                    tok.column,
                    format!("unknown attribute `{key}`"),
                ));
            }
        }
    }
    Ok(attrs)
}

/// Parse `.skel` text into a validated skeleton.
pub fn parse_skeleton(text: &str) -> Result<Skeleton, ParseError> {
    let mut builder: Option<SkeletonBuilder> = None;
    let mut saw_layer = false;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens = tokenize(line);
        let Some(head) = tokens.first() else { continue };
        last_line = line_no;
        match head.text {
            "inputs" => {
                if builder.is_some() {
                    return Err(ParseError::new(
                        line_no,
                        head.column,
                        "duplicate `inputs` directive",
                    ));
                }
                let mut n = None;
                let mut dim = None;
                for tok in &tokens[1..] {
                    let (key, value) = split_attr(tok, line_no)?;
                    match key {
                        "n" => n = Some(parse_usize(value, key, line_no, tok.column)?),
                        "dim" => dim = Some(parse_usize(value, key, line_no, tok.column)?),
                        _ => {
                            return Err(ParseError::new(
                                line_no,
                                tok.column,
                                format!("unknown attribute `{key}`"),
                            ));
                        }
                    }
                }
                let n = n.ok_or_else(|| {
                    ParseError::new(line_no, head.column, "`inputs` requires n=<int>")
                })?;
                let dim = dim.ok_or_else(|| {
                    ParseError::new(line_no, head.column, "`inputs` requires dim=<int>")
                })?;
                builder = Some(
                    SkeletonBuilder::new(n, dim)
                        .map_err(|e| ParseError::new(line_no, head.column, e.to_string()))?,
                );
            }
            "bias" => {
                let b = builder.take().ok_or_else(|| {
                    ParseError::new(line_no, head.column, "`inputs` must come first")
                })?;
                if saw_layer {
                    return Err(ParseError::new(
                        line_no,
                        head.column,
                        "`bias` must precede layer lines",
                    ));
                }
                let tok = tokens.get(1).ok_or_else(|| {
                    ParseError::new(line_no, head.column, "`bias` requires beta=<float>")
                })?;
                let (key, value) = split_attr(tok, line_no)?;
                if key != "beta" {
                    return Err(ParseError::new(
                        line_no,
                        tok.column,
                        format!("unknown attribute `{key}`"),
                    ));
                }
                let beta = parse_f64(value, key, line_no, tok.column)?;
                builder = Some(
                    b.beta(beta)
                        .map_err(|e| ParseError::new(line_no, tok.column, e.to_string()))?,
                );
            }
            "fc" | "conv" => {
                let b = builder.take().ok_or_else(|| {
                    ParseError::new(line_no, head.column, "`inputs` must come first")
                })?;
                let is_conv = head.text == "conv";
                let attrs = parse_layer_attrs(&tokens[1..], line_no, is_conv)?;
                let activation = attrs.activation.ok_or_else(|| {
                    ParseError::new(line_no, head.column, "layer requires activation=<act>")
                })?;
                let mut spec = if is_conv {
                    let width = attrs.width.ok_or_else(|| {
                        ParseError::new(line_no, head.column, "conv requires width=<int>")
                    })?;
                    let stride = attrs.stride.ok_or_else(|| {
                        ParseError::new(line_no, head.column, "conv requires stride=<int>")
                    })?;
                    LayerSpec::conv(width, stride, activation)
                } else {
                    LayerSpec::fc(activation)
                };
                if let Some(delta) = attrs.delta {
                    spec = spec.with_delta(delta);
                }
                builder = Some(
                    b.layer(spec)
                        .map_err(|e| ParseError::new(line_no, head.column, e.to_string()))?,
                );
                saw_layer = true;
            }
            other => {
                return Err(ParseError::new(
                    line_no,
                    head.column,
                    format!("unknown directive `{other}`"),
                ));
            }
        }
    }
    let builder = builder
        .ok_or_else(|| ParseError::new(last_line.max(1), 1, "missing `inputs` directive"))?;
    builder
        .finish()
        .map_err(|e| ParseError::new(last_line.max(1), 1, e.to_string()))
}

impl From<SkeletonError> for ParseError {
    fn from(e: SkeletonError) -> Self {
        ParseError::new(0, 0, e.to_string())
    }
}
