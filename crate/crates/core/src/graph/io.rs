use std::io::{BufRead, Write};

use serde_path_to_error::Segment;

use super::{GraphError, InteractionGraph};

pub fn serialize(graph: &InteractionGraph) -> String {
    serde_json::to_string(graph).expect("graphs always serialize")
}

fn json_path(path: &serde_path_to_error::Path, message: &str) -> String {
    let mut out = String::from("$");
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("[{index}]")),
            Segment::Map { key } => out.push_str(&format!(".{key}")),
            Segment::Enum { variant } => out.push_str(&format!(".{variant}")),
            Segment::Unknown => out.push_str(".?"),
        }
    }
    if let Some(field) = message.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
        out.push('.');
        out.push_str(field);
    }
    out
}

/// Parses and validates one graph; schema errors carry a `$.a.b[0]` path.
pub fn deserialize(text: &str) -> Result<InteractionGraph, GraphError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let graph: InteractionGraph = serde_path_to_error::deserialize(de).map_err(|e| {
        let message = e.inner().to_string();
        GraphError::Parse { path: json_path(e.path(), &message), message }
    })?;
    graph.validate()?;
    Ok(graph)
}

/// Writes one graph per line.
pub struct GraphWriter<W: Write> {
    inner: W,
}

impl<W: Write> GraphWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn write(&mut self, graph: &InteractionGraph) -> Result<(), GraphError> {
        writeln!(self.inner, "{}", serialize(graph))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, GraphError> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streams graphs from JSONL, one line at a time. Blank lines are skipped.
pub struct GraphReader<R: BufRead> {
    inner: R,
    line: usize,
    buf: String,
}

impl<R: BufRead> GraphReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, line: 0, buf: String::new() }
    }
}

impl<R: BufRead> Iterator for GraphReader<R> {
    type Item = Result<InteractionGraph, GraphError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) if self.buf.trim().is_empty() => continue,
                Ok(_) => {
                    let line = self.line;
                    return Some(deserialize(self.buf.trim_end()).map_err(|e| GraphError::Line {
                        line,
                        source: Box::new(e),
                    }));
                }
                Err(e) => return Some(Err(e.into())),
            }
        }
    }
}

/// Reads a whole JSONL file.
pub fn read_graphs(path: &std::path::Path) -> Result<Vec<InteractionGraph>, GraphError> {
    let file = std::fs::File::open(path)?;
    GraphReader::new(std::io::BufReader::new(file)).collect()
}

pub fn write_graphs(path: &std::path::Path, graphs: &[InteractionGraph]) -> Result<(), GraphError> {
    let file = std::fs::File::create(path)?;
    let mut w = GraphWriter::new(std::io::BufWriter::new(file));
    for g in graphs {
        w.write(g)?;
    }
    w.finish()?;
    Ok(())
}
