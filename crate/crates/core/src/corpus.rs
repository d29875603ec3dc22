//! Sample programs covering the supported control-flow shapes.

use rand::Rng;

use crate::isa::{parse_program, Program};

#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub name: &'static str,
    pub source: &'static str,
    /// Half-open range of every input register, in `r0..` order.
    pub inputs: &'static [(u64, u64)],
    /// Inputs that together execute every edge of the CFG.
    pub coverage: &'static [&'static [u64]],
}

impl Sample {
    pub fn program(&self) -> Program {
        parse_program(self.source).expect("corpus programs parse")
    }

    pub fn random_inputs<R: Rng>(&self, rng: &mut R) -> Vec<u64> {
        self.inputs.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()
    }
}

pub const STRAIGHT_LINE: Sample = Sample {
    name: "straight-line",
    source: "\
    mov r2, r0
    mul r2, 3
    add r2, r1
    xor r2, 0x55
    store [0x800], r2
    load r3, [0x800]
    shl r3, 2
    out r2
    out r3
    halt
",
    inputs: &[(0, 1 << 32), (0, 1 << 32)],
    coverage: &[&[3, 4]],
};

pub const IF_ELSE: Sample = Sample {
    name: "if-else",
    source: "\
    mov r2, r0
    sub r2, r1
    shr r2, 63
    cmp r2, 0
    jz first
    out r1
    jmp done
first:
    out r0
done:
    halt
",
    inputs: &[(0, 1000), (0, 1000)],
    coverage: &[&[4, 9], &[9, 4]],
};

pub const LOOP_SUM: Sample = Sample {
    name: "loop",
    source: "\
    mov r1, 0
loop:
    cmp r0, 0
    jz done
    add r1, r0
    sub r0, 1
    jmp loop
done:
    out r1
    halt
",
    inputs: &[(0, 64)],
    coverage: &[&[2]],
};

pub const NESTED_LOOP: Sample = Sample {
    name: "nested-loop",
    source: "\
    mov r2, 0
outer:
    cmp r2, r0
    jz done
    mov r3, 0
    mov r4, 0
inner:
    cmp r3, r1
    jz next
    mov r5, r2
    mul r5, r3
    add r4, r5
    add r3, 1
    jmp inner
next:
    out r4
    add r2, 1
    jmp outer
done:
    halt
",
    inputs: &[(0, 6), (0, 6)],
    coverage: &[&[2, 2]],
};

pub const CALL_CHAIN: Sample = Sample {
    name: "call-chain",
    source: "\
    call f
    out r0
    call g
    out r0
    halt
f:
    add r0, 7
    call g
    mul r0, 2
    ret
g:
    xor r0, 0x0f
    ret
",
    inputs: &[(0, 1 << 16)],
    coverage: &[&[1]],
};

/// `a·b` by add-and-double over the bits of `b`; the conditional addition
/// is a branch-free mask.
pub const DOUBLE_AND_ADD: Sample = Sample {
    name: "double-and-add",
    source: "\
    mov r2, 0
    cmp r1, 0
    jz end
loop:
    mov r4, r1
    and r4, 1
    mov r5, 0
    sub r5, r4
    and r5, r0
    add r2, r5
    shl r0, 1
    shr r1, 1
    cmp r1, 0
    jnz loop
    out r2
    halt
end:
    out r2
    halt
",
    inputs: &[(0, 1 << 20), (0, 1 << 20)],
    coverage: &[&[3, 5], &[3, 0]],
};

pub const ARRAY: Sample = Sample {
    name: "memory-array",
    source: "\
    mov r1, 0
    mov r2, 0x1000
fill:
    cmp r1, r0
    jz sum
    mov r3, r1
    mul r3, r1
    store [r2+0], r3
    add r2, 8
    add r1, 1
    jmp fill
sum:
    mov r4, 0
scan:
    cmp r2, 0x1000
    jz done
    sub r2, 8
    load r3, [r2+0]
    add r4, r3
    jmp scan
done:
    out r4
    halt
",
    inputs: &[(0, 24)],
    coverage: &[&[2]],
};

pub const STACK_REVERSE: Sample = Sample {
    name: "stack-reverse",
    source: "\
    push r0
    push r1
    push r2
    push 99
    pop r3
    pop r4
    pop r5
    pop r6
    out r3
    out r4
    out r5
    out r6
    halt
",
    inputs: &[(0, 1 << 40), (0, 1 << 40), (0, 1 << 40)],
    coverage: &[&[1, 2, 3]],
};

pub const GCD: Sample = Sample {
    name: "gcd",
    source: "\
loop:
    cmp r0, r1
    jz done
    mov r2, r0
    sub r2, r1
    shr r2, 63
    cmp r2, 0
    jz a_bigger
    sub r1, r0
    jmp loop
a_bigger:
    sub r0, r1
    jmp loop
done:
    out r0
    halt
",
    inputs: &[(1, 200), (1, 200)],
    coverage: &[&[4, 6]],
};

pub const COLLATZ: Sample = Sample {
    name: "collatz",
    source: "\
    mov r1, 0
loop:
    cmp r0, 1
    jz done
    cmp r1, 100
    jz done
    add r1, 1
    mov r2, r0
    and r2, 1
    cmp r2, 0
    jnz odd
    shr r0, 1
    jmp loop
odd:
    mul r0, 3
    add r0, 1
    jmp loop
done:
    out r1
    out r0
    halt
",
    inputs: &[(1, 100)],
    coverage: &[&[3], &[97]],
};

pub const FACTORIAL: Sample = Sample {
    name: "recursive-factorial",
    source: "\
    mov r1, 1
    call fact
    out r1
    halt
fact:
    cmp r0, 1
    jz base
    push r0
    sub r0, 1
    call fact
    pop r0
    mul r1, r0
    ret
base:
    ret
",
    inputs: &[(1, 12)],
    coverage: &[&[3]],
};

/// Return through a pushed label instead of a call.
pub const PUSHED_RETURN: Sample = Sample {
    name: "pushed-return",
    source: "\
    push @after
    jmp work
work:
    add r0, 10
    ret
after:
    out r0
    halt
",
    inputs: &[(0, 1000)],
    coverage: &[&[1]],
};

pub const FIBONACCI: Sample = Sample {
    name: "fibonacci",
    source: "\
    mov r1, 0
    mov r2, 1
loop:
    cmp r0, 0
    jz done
    out r1
    mov r3, r1
    add r3, r2
    mov r1, r2
    mov r2, r3
    sub r0, 1
    jmp loop
done:
    store [0x200], 1
    store [0x208], r1
    out [0x200]
    halt
",
    inputs: &[(0, 40)],
    coverage: &[&[2]],
};

pub const ALL: &[Sample] = &[
    STRAIGHT_LINE,
    IF_ELSE,
    LOOP_SUM,
    NESTED_LOOP,
    CALL_CHAIN,
    DOUBLE_AND_ADD,
    ARRAY,
    STACK_REVERSE,
    GCD,
    COLLATZ,
    FACTORIAL,
    PUSHED_RETURN,
    FIBONACCI,
];

pub fn by_name(name: &str) -> Option<Sample> {
    ALL.iter().copied().find(|s| s.name == name)
}

/// `k` blocks joined by static jumps; the last one prints and halts.
pub fn chain(k: usize) -> Program {
    assert!(k >= 1);
    let mut src = String::new();
    for i in 0..k - 1 {
        src.push_str(&format!("b{i}:\n    add r0, {}\n    jmp b{}\n", i + 1, i + 1));
    }
    src.push_str(&format!("b{}:\n    out r0\n    halt\n", k - 1));
    parse_program(&src).expect("chain parses")
}
