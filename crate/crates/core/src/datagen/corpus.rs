//! Seeded generator of semantically valid mini-C programs.
//!
//! Programs mix struct definitions, globals, prototypes, functions with
//! parameters and calls, member assignments, nested blocks and `printf`
//! calls, so that most deletions break some declaration-use dependency.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CorpusFile;

struct StructDef {
    tag: String,
    members: Vec<String>,
}

struct FuncDef {
    name: String,
    arity: usize,
}

#[derive(Clone)]
enum Var {
    Int(String),
    Struct { name: String, tag: usize },
}

struct Gen {
    rng: ChaCha8Rng,
    out: String,
    indent: usize,
    structs: Vec<StructDef>,
    funcs: Vec<FuncDef>,
    scopes: Vec<Vec<Var>>,
    fresh: usize,
}

impl Gen {
    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn ints(&self) -> Vec<String> {
        self.scopes
            .iter()
            .flatten()
            .filter_map(|v| match v {
                Var::Int(n) => Some(n.clone()),
                Var::Struct { .. } => None,
            })
            .collect()
    }

    fn struct_vars(&self) -> Vec<(String, usize)> {
        self.scopes
            .iter()
            .flatten()
            .filter_map(|v| match v {
                Var::Struct { name, tag } => Some((name.clone(), *tag)),
                Var::Int(_) => None,
            })
            .collect()
    }

    fn declare(&mut self, var: Var) {
        self.scopes.last_mut().expect("scope").push(var);
    }

    fn operand(&mut self, depth: usize, callable: usize) -> String {
        let ints = self.ints();
        let svars = self.struct_vars();
        match self.rng.gen_range(0..10) {
            0..=3 if !ints.is_empty() => ints.choose(&mut self.rng).unwrap().clone(),
            4 | 5 if callable > 0 && depth < 2 => self.call(depth + 1, callable),
            6 if !svars.is_empty() => {
                let (name, tag) = svars.choose(&mut self.rng).unwrap().clone();
                let member = self.structs[tag].members.choose(&mut self.rng).unwrap().clone();
                format!("{name}.{member}")
            }
            7 if depth < 2 => format!("({})", self.expr(depth + 1, callable)),
            _ => self.rng.gen_range(0..100).to_string(),
        }
    }

    fn expr(&mut self, depth: usize, callable: usize) -> String {
        let mut e = self.operand(depth, callable);
        let extra = if depth < 2 { self.rng.gen_range(0..3) } else { 0 };
        for _ in 0..extra {
            let op = *["+", "-", "*", "<"].choose(&mut self.rng).unwrap();
            let rhs = self.operand(depth, callable);
            e = format!("{e} {op} {rhs}");
        }
        e
    }

    /// Calls one of the first `callable` functions with its exact arity.
    fn call(&mut self, depth: usize, callable: usize) -> String {
        let f = self.rng.gen_range(0..callable);
        let (name, arity) = (self.funcs[f].name.clone(), self.funcs[f].arity);
        let args: Vec<String> = (0..arity).map(|_| self.expr(depth + 1, callable)).collect();
        format!("{name}({})", args.join(", "))
    }

    fn statement(&mut self, depth: usize, callable: usize) {
        let ints = self.ints();
        let svars = self.struct_vars();
        match self.rng.gen_range(0..12) {
            0..=2 => {
                let name = self.fresh("v");
                let init = self.expr(0, callable);
                let ty = if self.rng.gen_bool(0.8) { "int" } else { "char" };
                self.line(&format!("{ty} {name} = {init};"));
                self.declare(Var::Int(name));
            }
            3 if !self.structs.is_empty() => {
                let tag = self.rng.gen_range(0..self.structs.len());
                let name = self.fresh("s");
                let line = format!("struct {} {name};", self.structs[tag].tag);
                self.line(&line);
                self.declare(Var::Struct { name, tag });
            }
            4 | 5 if !ints.is_empty() => {
                let target = ints.choose(&mut self.rng).unwrap().clone();
                let value = self.expr(0, callable);
                self.line(&format!("{target} = {value};"));
            }
            6 if !svars.is_empty() => {
                let (name, tag) = svars.choose(&mut self.rng).unwrap().clone();
                let member = self.structs[tag].members.choose(&mut self.rng).unwrap().clone();
                let value = self.expr(0, callable);
                self.line(&format!("{name}.{member} = {value};"));
            }
            7 | 8 => {
                let value = self.expr(0, callable);
                self.line(&format!("printf(\"%d\\n\", {value});"));
            }
            9 if callable > 0 => {
                let call = self.call(0, callable);
                self.line(&format!("{call};"));
            }
            10 if depth < 2 => {
                self.line("{");
                self.indent += 1;
                self.scopes.push(Vec::new());
                for _ in 0..self.rng.gen_range(1..4) {
                    self.statement(depth + 1, callable);
                }
                self.scopes.pop();
                self.indent -= 1;
                self.line("}");
            }
            _ => {
                let name = self.fresh("v");
                self.line(&format!("int {name};"));
                self.declare(Var::Int(name));
            }
        }
    }

    fn program(mut self) -> String {
        for _ in 0..self.rng.gen_range(0..3) {
            let tag = self.fresh("S");
            let members: Vec<String> = (0..self.rng.gen_range(1..4)).map(|i| format!("m{i}")).collect();
            self.line(&format!("struct {tag} {{"));
            self.indent += 1;
            for m in &members {
                let ty = if self.rng.gen_bool(0.7) { "int" } else { "char" };
                self.line(&format!("{ty} {m};"));
            }
            self.indent -= 1;
            self.line("};");
            self.structs.push(StructDef { tag, members });
        }
        if self.rng.gen_bool(0.2) {
            let tag = self.fresh("F");
            self.line(&format!("struct {tag};"));
        }

        for _ in 0..self.rng.gen_range(0..4) {
            let name = self.fresh("g");
            if !self.structs.is_empty() && self.rng.gen_bool(0.2) {
                let tag = self.rng.gen_range(0..self.structs.len());
                let line = format!("struct {} {name};", self.structs[tag].tag);
                self.line(&line);
                self.declare(Var::Struct { name, tag });
            } else if self.rng.gen_bool(0.5) {
                let value = self.rng.gen_range(0..50);
                self.line(&format!("int {name} = {value};"));
                self.declare(Var::Int(name));
            } else {
                let other = self.fresh("g");
                self.line(&format!("int {name}, {other};"));
                self.declare(Var::Int(name));
                self.declare(Var::Int(other));
            }
        }

        let n_funcs = self.rng.gen_range(2..7);
        for f in 0..n_funcs {
            let name = self.fresh("f");
            let params: Vec<String> = (0..self.rng.gen_range(0..4)).map(|i| format!("p{i}")).collect();
            let signature = format!(
                "int {name}({})",
                params.iter().map(|p| format!("int {p}")).collect::<Vec<_>>().join(", ")
            );
            self.funcs.push(FuncDef {
                name,
                arity: params.len(),
            });
            if self.rng.gen_bool(0.3) {
                self.line(&format!("{signature};"));
            }
            self.line(&format!("{signature} {{"));
            self.indent += 1;
            self.scopes.push(params.into_iter().map(Var::Int).collect());
            for _ in 0..self.rng.gen_range(2..6) {
                self.statement(0, f);
            }
            let ret = self.expr(0, f);
            self.line(&format!("return {ret};"));
            self.scopes.pop();
            self.indent -= 1;
            self.line("}");
        }

        self.line("int main() {");
        self.indent += 1;
        self.scopes.push(Vec::new());
        for _ in 0..self.rng.gen_range(2..6) {
            self.statement(0, n_funcs);
        }
        self.line("return 0;");
        self.scopes.pop();
        self.indent -= 1;
        self.line("}");
        self.out
    }
}

/// One program; the same seed always yields the same text.
pub fn generate_program(seed: u64) -> String {
    Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        out: String::new(),
        indent: 0,
        structs: Vec::new(),
        funcs: Vec::new(),
        scopes: vec![Vec::new()],
        fresh: 0,
    }
    .program()
}

/// `count` programs named `prog_0000.c`, `prog_0001.c`, ...
pub fn generate_corpus(count: usize, seed: u64) -> Vec<CorpusFile> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            CorpusFile {
                name: format!("prog_{i:04}.c"),
                source: generate_program(rng.gen()),
            }
        })
        .collect()
}
