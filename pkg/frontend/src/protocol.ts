// Wire protocol shared with the generation server: one JSON object per
// WebSocket text frame in each direction.

export type ControlMessage = {
	id: number;
	p1: number;
	p2: number;
	p3: number;
	cat: number;
};

export type ReplyStatus = 'ok' | 'superseded' | 'parse_error' | 'bad_category' | 'internal_error';

export type GenerationReply = {
	id: number | null;
	status: ReplyStatus;
	path?: string;
	samples?: number[];
	rate?: number;
	detail?: string;
};

export function encodeControl(msg: ControlMessage): string {
	if (![msg.p1, msg.p2, msg.p3].every(Number.isFinite)) {
		throw new Error('control values must be finite');
	}
	if (!Number.isInteger(msg.cat) || msg.cat < 0) {
		throw new Error('category must be a non-negative integer');
	}
	return JSON.stringify({ id: msg.id, p1: msg.p1, p2: msg.p2, p3: msg.p3, cat: msg.cat });
}

export function decodeReply(raw: string): GenerationReply {
	let obj: unknown;
	try {
		obj = JSON.parse(raw);
	} catch {
		throw new Error('reply is not valid JSON');
	}
	if (typeof obj !== 'object' || obj === null || !('status' in obj)) {
		throw new Error('reply missing status');
	}
	const rec = obj as Record<string, unknown>;
	const reply: GenerationReply = {
		id: typeof rec.id === 'number' ? rec.id : null,
		status: String(rec.status) as ReplyStatus
	};
	if (typeof rec.path === 'string') reply.path = rec.path;
	if (typeof rec.rate === 'number') reply.rate = rec.rate;
	if (typeof rec.detail === 'string') reply.detail = rec.detail;
	if (Array.isArray(rec.samples)) reply.samples = rec.samples.map(Number);
	return reply;
}
